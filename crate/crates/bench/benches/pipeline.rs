use std::collections::HashMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use tagforge_bench::{categories, corpus, gazetteer};
use tagforge_core::annotator::{render_tagged, strip_tags, MarkupPolicy};
use tagforge_core::bench::{synth, HaystackBuilder, HaystackSpec};
use tagforge_core::chunker::{chunk_document, dedup, reassemble, ChunkStrategy, ChunkingConfig};
use tagforge_core::pipeline::{tag_chunks, PipelineOptions};
use tagforge_core::taggers::{Tagger, TaggerStats};
use tagforge_core::tokens::EstimatorMode;

fn chunking(c: &mut Criterion) {
    let doc = corpus(1, 2000).remove(0);
    let mut g = c.benchmark_group("chunk");
    g.throughput(Throughput::Bytes(doc.text.len() as u64));
    for (name, strategy) in [
        ("sentence", ChunkStrategy::Sentence),
        ("paragraph", ChunkStrategy::Paragraph),
    ] {
        let cfg = ChunkingConfig::new(strategy, 256);
        g.bench_function(name, |b| b.iter(|| chunk_document(black_box(&doc), &cfg).unwrap()));
    }
    g.finish();
}

fn gazetteer_scan(c: &mut Criterion) {
    let tagger = gazetteer();
    let doc = corpus(1, 400).remove(0);
    let chunks = chunk_document(&doc, &ChunkingConfig::new(ChunkStrategy::Sentence, 256))
        .unwrap()
        .chunks;
    let mut g = c.benchmark_group("gazetteer");
    g.throughput(Throughput::Bytes(doc.text.len() as u64));
    g.bench_function("tag", |b| {
        b.iter(|| {
            let stats = TaggerStats::default();
            for ch in &chunks {
                black_box(tagger.tag(ch, &stats).unwrap());
            }
        })
    });
    g.finish();
}

fn markup(c: &mut Criterion) {
    let tagger = gazetteer();
    let names = categories().names();
    let mut doc = corpus(1, 400).remove(0);
    // every needle in, so there are spans to render
    for n in synth::needles(16) {
        doc.text.push(' ');
        doc.text.push_str(&n.needle_text);
    }
    let chunks = chunk_document(&doc, &ChunkingConfig::new(ChunkStrategy::Sentence, 256))
        .unwrap()
        .chunks;
    let stats = TaggerStats::default();
    let tagged: Vec<_> = chunks.iter().map(|ch| tagger.tag(ch, &stats).unwrap()).collect();
    let policy = MarkupPolicy::default();
    let marked: Vec<String> = tagged.iter().map(|t| render_tagged(t, &policy).unwrap()).collect();
    let mut g = c.benchmark_group("markup");
    g.bench_function("render", |b| {
        b.iter(|| {
            for t in &tagged {
                black_box(render_tagged(t, &policy).unwrap());
            }
        })
    });
    g.bench_function("strip", |b| {
        b.iter(|| {
            for m in &marked {
                black_box(strip_tags(m, &names));
            }
        })
    });
    g.finish();
}

fn spec(cl: usize) -> HaystackSpec {
    HaystackSpec {
        needle: synth::needles(1).remove(0),
        context_length: cl,
        position_index: 13,
        positions: 26,
        seed: 0,
    }
}

fn haystack(c: &mut Criterion) {
    let builder = HaystackBuilder::new(&corpus(8, 400), EstimatorMode::CharsDiv4);
    let mut g = c.benchmark_group("haystack");
    g.sample_size(20);
    for cl in [250usize, 16_000, 32_000] {
        g.bench_with_input(BenchmarkId::from_parameter(cl), &spec(cl), |b, s| {
            b.iter(|| builder.build(s).unwrap())
        });
    }
    g.finish();
}

/// Chunk, dedup, tag and reassemble one 32K-token context.
fn tagged_context(c: &mut Criterion) {
    let tagger = gazetteer();
    let doc = HaystackBuilder::new(&corpus(8, 400), EstimatorMode::CharsDiv4)
        .build(&spec(32_000))
        .unwrap()
        .doc;
    let cfg = ChunkingConfig::new(ChunkStrategy::Sentence, 256);
    let policy = MarkupPolicy::default();
    let mut g = c.benchmark_group("tagged_context");
    g.sample_size(20);
    g.bench_function("32K", |b| {
        b.iter(|| {
            let chunked = chunk_document(&doc, &cfg).unwrap();
            let (unique, occ) = dedup(&chunked.chunks);
            let run = tag_chunks(&unique, &tagger, None, PipelineOptions::default()).unwrap();
            let map: HashMap<_, _> = run.results.into_iter().map(|t| (t.chunk.hash, t)).collect();
            black_box(reassemble(&doc, &occ, &map, &policy).unwrap())
        })
    });
    g.finish();
}

criterion_group!(benches, chunking, gazetteer_scan, markup, haystack, tagged_context);
criterion_main!(benches);
