//! Sequential vs rayon execution for the data-parallel pieces: Gram matrix
//! fill, scoring a dataset, and independent stability trials.
//!
//! Run with `cargo bench -p csranker`. Without the `parallel` feature both
//! variants take the sequential path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use csranker::dataset::{generate_synthetic, SynthSpec, DEFAULT_WEIGHTS};
use csranker::evaluation::{score_all_with, stability_trials};
use csranker::kernel::gram_matrix;
use csranker::{Dataset, Execution, ModelParams, OnlineConfig, SolverChoice, TrainingSet};
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn dataset(n: usize, seed: u64) -> Dataset {
    generate_synthetic(&SynthSpec::normal(n, n, seed))
        .unwrap()
        .split_train_test((2, 1), seed)
        .unwrap()
        .normalize_and_weight(DEFAULT_WEIGHTS)
        .unwrap()
}

fn params() -> ModelParams {
    ModelParams::new(2.0, 1.0, 0.5, 1.0).unwrap()
}

fn bench_gram(c: &mut Criterion) {
    let d = dataset(400, 1);
    let set = TrainingSet::from_dataset(&d).unwrap();
    let idx: Vec<usize> = (0..set.len()).collect();
    let p = params();
    let mut group = c.benchmark_group("gram_matrix");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, idx.len()), &exec, |b, &exec| {
            b.iter(|| black_box(gram_matrix(&set.x, &idx, &p.kernel, exec)))
        });
    }
    group.finish();
}

fn bench_scoring(c: &mut Criterion) {
    let d = dataset(1000, 2);
    let set = TrainingSet::from_dataset(&d).unwrap();
    let model = csranker::online::run(&set, &params(), &OnlineConfig::default()).discriminant;
    let mut group = c.benchmark_group("score_all");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, d.len()), &exec, |b, &exec| {
            b.iter(|| black_box(score_all_with(&d, &model, exec)))
        });
    }
    group.finish();
}

fn bench_stability(c: &mut Criterion) {
    let d = dataset(300, 3);
    let solver = SolverChoice::Online(OnlineConfig::default());
    let p = params();
    let mut group = c.benchmark_group("stability_trials");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, 4), &exec, |b, &exec| {
            b.iter(|| black_box(stability_trials(&d, &p, &solver, 4, 0.05, 0, exec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_gram, bench_scoring, bench_stability);
criterion_main!(benches);
