//! One worker thread against the full pool for the hot paths.
//!
//! Build with `--no-default-features` to measure the sequential fallback.

use std::hint::black_box;

use chiralxy::optimize::{assemble_cell, minimize, CellProblem, SolverConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPoolBuilder;

fn pools() -> Vec<(usize, rayon::ThreadPool)> {
    let n = std::thread::available_parallelism().map_or(4, |n| n.get()).max(2);
    [1, n].into_iter().map(|t| (t, ThreadPoolBuilder::new().num_threads(t).build().unwrap())).collect()
}

fn cell(eps: f64) -> CellProblem {
    assemble_cell([0.0, 1.0], 1.0, eps).unwrap()
}

fn energy_and_gradient(c: &mut Criterion) {
    let p = cell(1.0 / 128.0);
    let x = p.ansatz();
    let mut group = c.benchmark_group("energy_and_gradient_eps_1_128");
    for (t, pool) in pools() {
        group.bench_function(BenchmarkId::new("energy", t), |b| b.iter(|| pool.install(|| black_box(p.energy(&x)))));
        group.bench_function(BenchmarkId::new("gradient", t), |b| {
            let mut g = vec![0.0; x.len()];
            b.iter(|| pool.install(|| black_box(p.energy_and_gradient(&x, &mut g))))
        });
    }
    group.finish();
}

fn cell_solve(c: &mut Criterion) {
    let p = cell(1.0 / 16.0);
    let cfg = SolverConfig { restarts: 4, hops: 2, ..SolverConfig::default() };
    let mut group = c.benchmark_group("cell_solve_eps_1_16");
    group.sample_size(10);
    for (t, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(t), |b| b.iter(|| pool.install(|| black_box(minimize(&p, &cfg).unwrap()))));
    }
    group.finish();
}

criterion_group!(benches, energy_and_gradient, cell_solve);
criterion_main!(benches);
