use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use evpirank_bench::Fixture;
use evpirank_core::baselines::{random_rank_metrics, NeuralBaseline, Variant};
use evpirank_core::eval::{build_labelsets, EvalMode};
use evpirank_core::evpi::{EvpiModel, LossTerms};
use evpirank_core::retrieval::{generate_all, tokenize, Index};
use evpirank_core::rng::SeedTree;

fn retrieval(c: &mut Criterion) {
    let fx = Fixture::new(1000, 8);
    let docs = fx.documents();
    c.bench_function("index_build_1000", |b| {
        b.iter(|| Index::build(black_box(&docs)).unwrap())
    });
    let index = Index::build(&docs).unwrap();
    let queries: Vec<Vec<String>> = docs.iter().take(100).map(|(_, t)| tokenize(t)).collect();
    c.bench_function("top_10_x100", |b| {
        b.iter(|| {
            for q in &queries {
                black_box(index.top_k(q, 10));
            }
        })
    });
    c.bench_function("generate_all_k10", |b| {
        b.iter(|| generate_all(black_box(&fx.triples), 10).unwrap())
    });
}

fn models(c: &mut Criterion) {
    let fx = Fixture::new(200, 50);
    let table = &fx.corpus.embeddings;
    let set = &fx.prepared[0];
    let tree = SeedTree::new(0);
    let evpi = EvpiModel::init(table.dim(), 100, &mut tree.stream("evpi"));
    let pqa = NeuralBaseline::init(Variant::Pqa, table.dim(), 100, &mut tree.stream("pqa"));
    c.bench_function("evpi_scores", |b| {
        b.iter(|| evpi.evpi_scores(table, black_box(set)).unwrap())
    });
    c.bench_function("evpi_loss_and_grad", |b| {
        b.iter(|| evpi.loss_and_grad(table, black_box(set), LossTerms::JOINT).unwrap())
    });
    c.bench_function("neural_pqa_loss_and_grad", |b| {
        b.iter(|| pqa.loss_and_grad(table, black_box(set)).unwrap())
    });
}

fn evaluation(c: &mut Criterion) {
    let fx = Fixture::new(500, 8);
    let labels = build_labelsets(&[], &fx.sets, EvalMode::Original).unwrap().labels;
    c.bench_function("random_rank_metrics_1000", |b| {
        b.iter_batched(
            || SeedTree::new(0).stream("bench"),
            |mut rng| random_rank_metrics(&labels, 1000, &mut rng).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = retrieval, models, evaluation
}
criterion_main!(benches);
