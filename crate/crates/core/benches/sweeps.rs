use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tasd::approxmm::{error_sweep, matmul_with, ErrorSweep};
use tasd::decomp::{sweep_synthetic, SyntheticSweep};
use tasd::synth::{random_sparse, ValueDist};
use tasd::Execution;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn dropped_nonzeros(c: &mut Criterion) {
    let grid = SyntheticSweep::dropped_nonzeros_grid(4, 1);
    let mut group = c.benchmark_group("sweep_synthetic");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new(name, grid.cells()), |b| {
            b.iter(|| sweep_synthetic(black_box(&grid), exec).unwrap())
        });
    }
    group.finish();
}

fn matmul_error(c: &mut Criterion) {
    let mut grid = ErrorSweep::matmul_error_grid(2, 1);
    grid.dim = 128;
    let mut group = c.benchmark_group("error_sweep");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new(name, grid.dim), |b| {
            b.iter(|| error_sweep(black_box(&grid), exec).unwrap())
        });
    }
    group.finish();
}

fn dense_matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for dim in [64usize, 256] {
        let a = random_sparse(dim, dim, 0.5, ValueDist::Uniform01, 1).unwrap();
        let b = random_sparse(dim, dim, 1.0, ValueDist::Uniform01, 2).unwrap();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, dim), &dim, |bench, _| {
                bench.iter(|| matmul_with(black_box(&a), black_box(&b), exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, dropped_nonzeros, matmul_error, dense_matmul);
criterion_main!(benches);
