//! Sequential vs rayon paths over the toy corpus.

use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use improv_core::corpus::{build_vocab, corpus_files, ingest_with, token_frequencies};
use improv_core::generation::{
    extract_topics, generate_candidates_with, DocFreqs, NgramModel, SamplingConfig, DEFAULT_ORDER, DEFAULT_SMOOTHING,
};
use improv_core::Exec;

const PATHS: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn exec_paths(c: &mut Criterion) {
    let files = corpus_files(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy_corpus")).unwrap();
    let corpus = ingest_with(Exec::Sequential, &files).unwrap();
    let vocab = build_vocab(&corpus, 50_000).unwrap();
    let model = NgramModel::train(&corpus, &vocab, DEFAULT_ORDER, DEFAULT_SMOOTHING).unwrap();
    let responses: Vec<&[String]> = corpus.responses().collect();
    let doc_freqs = DocFreqs::from_corpus(&corpus, Exec::Sequential);
    let topic = extract_topics(&["a ship lost at sea with the captain"], &doc_freqs, 5);
    let sampling = SamplingConfig { k: 32, ..SamplingConfig::default() };

    let mut group = c.benchmark_group("ingest");
    for (name, exec) in PATHS {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| ingest_with(exec, black_box(&files)).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("token_frequencies");
    for (name, exec) in PATHS {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| token_frequencies(black_box(&corpus), exec))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("train");
    for (name, exec) in PATHS {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| NgramModel::train_with(exec, black_box(&corpus), &vocab, DEFAULT_ORDER, DEFAULT_SMOOTHING).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("generate_candidates");
    for (name, exec) in PATHS {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| generate_candidates_with(exec, black_box(&model), &topic, 42, &sampling))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("perplexity");
    for (name, exec) in PATHS {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| model.corpus_perplexity(exec, black_box(&responses)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, exec_paths);
criterion_main!(benches);
