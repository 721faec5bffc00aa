//! Truncated Taylor expansions of differential equations driven by Hölder
//! paths with exponent above one half, with remainder bounds, a Picard
//! reference solver and a Lie-series solver for matrix groups.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod csvio;
pub mod error;
pub mod exec;
pub mod fraccalc;
pub mod jets;
pub mod magnus;
pub mod paths;
pub mod special;
pub mod stochastic;
pub mod taylor;
pub mod word;
pub mod young;

pub use error::{Error, Result};
pub use word::Word;
