//! Rayon-backed helpers against the sequential fallback on the hot loops:
//! document encoding, corpus ranking with NDCG, and CE pair scoring.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use synthq_core::corpus::{QueryMode, SyntheticQuerySet};
use synthq_core::eval_stats::{evaluate, DocIndex, EvalQuery, QrelRecord, RelevanceJudgments};
use synthq_core::par::{with_execution, Execution};
use synthq_core::qd_metrics::ce_ratio;
use synthq_core::trainer::fixture::{mini_corpus, MiniCorpusSpec};
use synthq_core::trainer::{EncoderShape, ToyEncoder};
use synthq_core::StubBackend;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench(c: &mut Criterion) {
    let (corpus, pairs) = mini_corpus(MiniCorpusSpec {
        n_docs: 1000,
        ..Default::default()
    });
    let encoder = ToyEncoder::init(EncoderShape::default(), &mut ChaCha8Rng::seed_from_u64(0));
    let texts: Vec<String> = corpus.docs().iter().map(|d| d.text.clone()).collect();
    let index = DocIndex::build(&encoder, corpus.docs());
    let queries: Vec<EvalQuery> = pairs
        .iter()
        .take(300)
        .enumerate()
        .map(|(i, p)| EvalQuery {
            query_id: format!("q{i}"),
            text: p.query.clone(),
        })
        .collect();
    let judgments = RelevanceJudgments::from_records(pairs.iter().take(300).enumerate().map(|(i, p)| QrelRecord {
        query_id: format!("q{i}"),
        doc_id: p.doc_id.clone(),
        rel: 1,
    }));
    let sets: Vec<SyntheticQuerySet> = pairs
        .chunks(3)
        .map(|c| SyntheticQuerySet {
            doc_id: c[0].doc_id.clone(),
            mode: QueryMode::Diverse,
            queries: c.iter().map(|p| p.query.clone()).collect(),
            generator_id: "bench".into(),
            prompt_hash: "bench".into(),
        })
        .collect();
    let backend = StubBackend::default();

    let mut g = c.benchmark_group("encode_batch");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| with_execution(mode, || black_box(encoder.encode_batch(&texts))))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("rank_and_ndcg");
    g.sample_size(20);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| with_execution(mode, || black_box(evaluate(&encoder, &index, &queries, &judgments, 10).unwrap())))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("ce_ratio");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| with_execution(mode, || black_box(ce_ratio(&sets, 0.5, &backend).unwrap())))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
