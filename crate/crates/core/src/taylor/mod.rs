//! Iterated integrals, expansion levels, truncations and remainder bounds.

pub mod bounds;
pub mod integrals;
pub mod levels;

pub use bounds::{
    detect_tc, path_norms, remainder_bound, remainder_bound_with, write_bound_csv, BoundParams,
    PathNorms, RemainderBound, TailMode, TcResult,
};
pub use integrals::{iterated_integral, iterated_integrals};
pub use levels::{
    expansion_levels, expansion_levels_with, inductive_levels, truncated_solution,
    write_levels_csv, ExpansionLevel,
};
