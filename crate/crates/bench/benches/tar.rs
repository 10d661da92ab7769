use std::collections::BTreeSet;
use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use tarsim_core::classifier::{fit_logreg, LabeledSet, ScoreVector};
use tarsim_core::experiment::{synthesize, SynthCategory, SynthSpec};
use tarsim_core::features::{build_vocabulary, featurize, vectorize, VectorizerConfig};
use tarsim_core::metrics::{cost_breakdown, RunState};
use tarsim_core::sampling::{select_batch, SamplingStrategy};
use tarsim_core::{run_tar, Corpus, RunConfig};

fn corpus(n_docs: usize) -> Corpus {
    let spec = SynthSpec::new(
        n_docs,
        vec![SynthCategory {
            name: "c".into(),
            prevalence: 0.05,
            noise: 0.2,
        }],
    );
    synthesize(&spec, 1).unwrap()
}

/// Deterministic pseudo-scores in (0, 1).
fn scores(n: usize) -> ScoreVector {
    ScoreVector::new((0..n).map(|i| ((i * 7919) % 1000) as f64 / 1000.0 + 0.0005).collect()).unwrap()
}

fn bench_vectorize(c: &mut Criterion) {
    let corpus = corpus(2000);
    let config = VectorizerConfig::default();
    let vocab = build_vocabulary(&corpus, &config).unwrap();
    c.bench_function("vectorize 2000 docs", |b| b.iter(|| vectorize(black_box(&corpus), &vocab, &config)));
}

fn bench_fit(c: &mut Criterion) {
    let corpus = corpus(2000);
    let x = featurize(&corpus, &VectorizerConfig::default()).unwrap();
    let labels = corpus.relevance_mask("c");
    let rows: Vec<usize> = (0..1000).collect();
    let sub = x.select_rows(&rows);
    c.bench_function("fit_logreg 1000 rows", |b| b.iter(|| fit_logreg(black_box(&sub), &labels[..1000], 1.0)));
}

fn bench_metrics(c: &mut Criterion) {
    let corpus = corpus(20_000);
    let qrels: BTreeSet<String> = corpus.relevant("c");
    let scores = scores(corpus.len());
    let mut labeled = LabeledSet::new();
    for i in (0..corpus.len()).step_by(50) {
        let id = corpus.doc_id(i);
        labeled.insert(id, qrels.contains(id), 1).unwrap();
    }
    let state = RunState {
        corpus: &corpus,
        labeled: &labeled,
        scores: &scores,
        qrels: &qrels,
        recall_target: 0.8,
    };
    c.bench_function("cost_breakdown 20000 docs", |b| b.iter(|| cost_breakdown(black_box(&state)).unwrap()));
    for strategy in [SamplingStrategy::relevance(200), SamplingStrategy::uncertainty(200)] {
        c.bench_function(&format!("select_batch {} 20000 docs", strategy.kind), |b| {
            b.iter(|| select_batch(&corpus, black_box(&scores), &labeled, &strategy).unwrap())
        });
    }
}

fn bench_run(c: &mut Criterion) {
    let corpus = Arc::new(corpus(2000));
    let cfg = RunConfig {
        iterations: 5,
        ..RunConfig::new("bench", "c", SamplingStrategy::relevance(50))
    };
    let mut group = c.benchmark_group("run");
    group.sample_size(10);
    group.bench_function("5 iterations, 2000 docs", |b| b.iter(|| run_tar(&cfg, Arc::clone(&corpus)).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_vectorize, bench_fit, bench_metrics, bench_run);
criterion_main!(benches);
