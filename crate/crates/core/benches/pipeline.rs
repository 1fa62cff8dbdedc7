//! Parallel vs sequential timings of the data-parallel stages.
//!
//! `parallel` runs on the global rayon pool; `sequential` runs the same call
//! inside a one-thread pool. Building with `--no-default-features` makes both
//! variants sequential.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use saefire_core::featsel::{f_test_scores, tree_importance_scores};
use saefire_core::gbdt::GbdtConfig;
use saefire_core::labeling::label_documents;
use saefire_core::linmodel::grid_search;
use saefire_core::pooling::{labels, pool_corpus, to_matrix, DEFAULT_TOKEN_CAP};
use saefire_core::synth::{generate_corpus, SynthConfig, SynthCorpus};
use saefire_core::{par, Matrix};

fn corpus() -> SynthCorpus {
    generate_corpus(&SynthConfig::default()).expect("default benchmark corpus")
}

fn dataset(c: &SynthCorpus) -> (Matrix, Vec<u8>) {
    let docs = pool_corpus(&c.streams, DEFAULT_TOKEN_CAP).unwrap();
    let (docs, _) = label_documents(docs, &c.records, 0.5).unwrap();
    (to_matrix(&docs).unwrap(), labels(&docs).unwrap())
}

/// Benchmarks `f` on the rayon pool and on a single thread.
fn both<R: Send>(c: &mut Criterion, group: &str, f: impl Fn() -> R + Sync + Send) {
    let mut g = c.benchmark_group(group);
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("parallel", rayon_threads()), |b| {
        b.iter(|| black_box(f()))
    });
    g.bench_function(BenchmarkId::new("sequential", 1), |b| {
        b.iter(|| par::serial(|| black_box(f())))
    });
    g.finish();
}

fn rayon_threads() -> usize {
    if par::is_parallel() {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        1
    }
}

fn benches(c: &mut Criterion) {
    let corpus = corpus();
    let (x, y) = dataset(&corpus);
    let n = x.rows();
    let split = n * 3 / 4;
    let rows =
        |r: std::ops::Range<usize>| Matrix::from_rows(x.cols(), r.map(|i| x.row(i))).unwrap();
    let (tx, vx) = (rows(0..split), rows(split..n));
    let (ty, vy) = (y[..split].to_vec(), y[split..].to_vec());
    let all: Vec<usize> = (0..x.cols()).collect();
    let importance = GbdtConfig {
        n_rounds: 50,
        max_depth: 3,
        early_stop_patience: None,
        ..GbdtConfig::default()
    };

    both(c, "synth_generate", || {
        generate_corpus(&SynthConfig::default()).unwrap()
    });
    both(c, "sum_pool_corpus", || {
        pool_corpus(&corpus.streams, DEFAULT_TOKEN_CAP).unwrap()
    });
    both(c, "f_test_2000", || f_test_scores(&x, &y).unwrap());
    both(c, "tree_importance_50_rounds", || {
        tree_importance_scores(&x, &y, &importance).unwrap()
    });
    both(c, "lambda_grid_2000", || {
        grid_search(
            (&tx, &ty),
            (&vx, &vy),
            &all,
            &[10000.0, 1000.0, 100.0, 10.0, 1.0],
        )
        .unwrap()
    });
}

criterion_group!(pipeline, benches);
criterion_main!(pipeline);
