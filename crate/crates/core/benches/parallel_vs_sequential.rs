//! Sequential vs rayon execution of the data-parallel kernels.
//!
//! Both paths produce bit-identical results; this suite only measures time.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use reglab::gaussian::{monte_carlo_mse_with, EstimatorKind, GaussianSpec};
use reglab::metrics::mmd2_with;
use reglab::nonparam::{solve_batch, toy_problem, Divergence, SolveOptions, DEFAULT_QUAD_NODES};
use reglab::rng::{normal_vec, stream_rng};
use reglab::Exec;
use std::hint::black_box;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn monte_carlo(c: &mut Criterion) {
    let spec = GaussianSpec::default();
    let mut group = c.benchmark_group("monte_carlo_mse_20k");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| monte_carlo_mse_with(black_box(&spec), EstimatorKind::Reg { lambda: 2.0 / 3.0 }, 20_000, 7, exec).unwrap())
        });
    }
    group.finish();
}

fn mmd(c: &mut Criterion) {
    let mut rng = stream_rng(3, 0);
    let x: Vec<Vec<f64>> = (0..800).map(|_| normal_vec(&mut rng, 2)).collect();
    let y: Vec<Vec<f64>> = (0..800).map(|_| normal_vec(&mut rng, 2)).collect();
    let mut group = c.benchmark_group("mmd2_800x800");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| mmd2_with(black_box(&x), black_box(&y), Some(1.0), exec).unwrap())
        });
    }
    group.finish();
}

fn nonparam_batch(c: &mut Criterion) {
    let (spec, energy) = toy_problem(DEFAULT_QUAD_NODES).unwrap();
    let jobs: Vec<(Divergence, f64)> = [Divergence::Kl, Divergence::Js]
        .into_iter()
        .flat_map(|d| [1e-3, 1e-2, 0.1, 1.0, 10.0].map(|l| (d, l)))
        .collect();
    let opts = SolveOptions::default();
    let mut group = c.benchmark_group("nonparam_batch_10");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| solve_batch(black_box(&spec), &energy, &jobs, &opts, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, mmd, nonparam_batch);
criterion_main!(benches);
