//! Parallel against sequential dispatch on the heavy kernels.
//!
//! Both variants run in the same binary: `exec::set_parallel(false)` routes
//! every helper through its sequential loop. Build with
//! `--no-default-features` to benchmark the sequential code path alone.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use young_taylor::exec;
use young_taylor::fraccalc::{lambda_alpha, FracParams};
use young_taylor::jets::{build_table, JetSystem, VectorField};
use young_taylor::paths::{holder_sup_norm, sample_fbm, Components, FbmSpec};
use young_taylor::stochastic::{mc_l2, McConfig};
use young_taylor::taylor::expansion_levels;
use young_taylor::Word;

const MODES: [(&str, bool); 2] = [("parallel", true), ("sequential", false)];

fn bench_lambda(c: &mut Criterion) {
    let path = sample_fbm(&FbmSpec::new(0.75, 2, 1.0, 257, 1)).unwrap();
    let params = FracParams::new(0.3, 1.0).unwrap();
    let mut g = c.benchmark_group("lambda_alpha");
    g.sample_size(10);
    for (name, on) in MODES {
        exec::set_parallel(on);
        g.bench_function(BenchmarkId::new(name, 257), |b| {
            b.iter(|| lambda_alpha(black_box(&path), &params).unwrap())
        });
    }
    g.finish();
}

fn bench_holder(c: &mut Criterion) {
    let path = sample_fbm(&FbmSpec::new(0.75, 2, 1.0, 1025, 2)).unwrap();
    let mut g = c.benchmark_group("holder_sup_norm");
    g.sample_size(10);
    for (name, on) in MODES {
        exec::set_parallel(on);
        g.bench_function(BenchmarkId::new(name, 1025), |b| {
            b.iter(|| holder_sup_norm(black_box(&path), 0.3, 1.0, Components::All).unwrap())
        });
    }
    g.finish();
}

fn bench_levels(c: &mut Criterion) {
    let sys = JetSystem::new(
        vec![
            VectorField::zero(2),
            VectorField::parse(&["(sin x2)", "(* x1 x2)"]).unwrap(),
            VectorField::parse(&["(cos x1)", "(const 0.5)"]).unwrap(),
        ],
        vec![0.1, 0.2],
        f64::INFINITY,
        6,
    )
    .unwrap();
    let table = build_table(&sys, 6).unwrap();
    let path = sample_fbm(&FbmSpec::new(0.7, 2, 0.5, 513, 3)).unwrap();
    let mut g = c.benchmark_group("expansion_levels");
    g.sample_size(10);
    for (name, on) in MODES {
        exec::set_parallel(on);
        g.bench_function(BenchmarkId::new(name, 6), |b| {
            b.iter(|| expansion_levels(black_box(&path), &table, 6).unwrap())
        });
    }
    g.finish();
}

fn bench_mc(c: &mut Criterion) {
    let words = ["1", "2", "1:2", "2:1:1"]
        .iter()
        .map(|w| w.parse::<Word>().unwrap())
        .collect();
    let cfg = McConfig {
        replicates: 500,
        fbm: FbmSpec::new(0.75, 2, 1.0, 65, 10),
        words,
        confidence: 0.99,
    };
    let mut g = c.benchmark_group("mc_l2");
    g.sample_size(10);
    for (name, on) in MODES {
        exec::set_parallel(on);
        g.bench_function(BenchmarkId::new(name, cfg.replicates), |b| {
            b.iter(|| mc_l2(black_box(&cfg)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_lambda, bench_holder, bench_levels, bench_mc);
criterion_main!(benches);
