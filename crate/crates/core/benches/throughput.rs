//! Sequential vs. rayon-parallel throughput of the replication loops.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;
use sacon::euler::{simulate_terminal, DiffusionModel, SchemeGrid};
use sacon::innovations::{InnovationLaw, LawKind};
use sacon::par;
use sacon::rng::StreamKey;
use sacon::robbins_monro::{rm_terminal, RMProblem, StepSchedule};

fn euler_paths(c: &mut Criterion) {
    let model = DiffusionModel::sin_vol().unwrap();
    let grid = SchemeGrid::new(1.0, 50).unwrap();
    let law = InnovationLaw::standard(LawKind::Gaussian, 1).unwrap();
    let x0 = DVector::from_element(1, 0.2);
    let stream = StreamKey::new(1);
    let path = |p: usize| simulate_terminal(&model, &grid, &x0, stream.path(p as u64), &law).unwrap()[0];

    let mut group = c.benchmark_group("euler_paths");
    for n in [1_000usize, 10_000] {
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| black_box(par::map_indexed_seq(n, path)))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| black_box(par::map_indexed_par(n, path)))
        });
    }
    group.finish();
}

fn rm_replications(c: &mut Criterion) {
    let law = InnovationLaw::standard(LawKind::Gaussian, 1).unwrap();
    let problem = RMProblem::mean_estimation(law).unwrap();
    let schedule = StepSchedule::power(1.0, 1.0).unwrap();
    let theta0 = DVector::zeros(1);
    let stream = StreamKey::new(2);
    let run = |r: usize| rm_terminal(&problem, &schedule, &theta0, 100, stream.replication(r as u64)).unwrap()[0];

    let mut group = c.benchmark_group("rm_replications");
    for n in [1_000usize, 10_000] {
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| black_box(par::map_indexed_seq(n, run)))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| black_box(par::map_indexed_par(n, run)))
        });
    }
    group.finish();
}

criterion_group!(benches, euler_paths, rm_replications);
criterion_main!(benches);
