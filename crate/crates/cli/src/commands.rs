use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;
use tagforge_core::annotator::render_tagged_text;
use tagforge_core::bench::{
    oracle, run_eval, synth, EvalOptions, EvalOutcome, EvalRecord, EvalSuite, GroupBy, HaystackBuilder, McqInstance,
    NeedleSpec, PositionSelection, PromptMode, TagContext,
};
use tagforge_core::cache::TagCache;
use tagforge_core::chunker::{chunk_document, dedup, reassemble};
use tagforge_core::io::{read_jsonl, write_jsonl, write_jsonl_to};
use tagforge_core::pipeline::{tag_chunks, PipelineOptions};
use tagforge_core::report::{default_grouping, emit_combined_report, Report, RunManifest, StageCounts};
use tagforge_core::taggers::Tagger;
use tagforge_core::tokens::TokenEstimator;
use tagforge_core::{content_hash, Chunk, Document, TaggedChunk};

use crate::args::*;
use crate::setup;

/// Shared per-invocation settings.
pub struct Ctx {
    pub seed: u64,
    pub config: Option<Value>,
}

impl Ctx {
    fn manifest<T: Serialize>(&self, command: &str, args: &T) -> Result<RunManifest> {
        Ok(RunManifest::new(command, serde_json::to_value(args)?, self.seed))
    }
}

fn write_manifest(path: &Path, m: &mut RunManifest) -> Result<()> {
    m.finish();
    let mut raw = serde_json::to_string_pretty(m)?;
    raw.push('\n');
    std::fs::write(path, raw).with_context(|| format!("{}", path.display()))
}

/// `out.jsonl` -> `out.jsonl.manifest.json`
fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_out<T: Serialize>(out: Option<&Path>, items: &[T]) -> Result<()> {
    match out {
        Some(p) => Ok(write_jsonl(p, items)?),
        None => {
            let stdout = std::io::stdout();
            write_jsonl_to(stdout.lock(), items)?;
            Ok(())
        }
    }
}

pub fn chunk(ctx: &Ctx, args: ChunkArgs) -> Result<()> {
    let args = setup::overlay(args, ctx.config.as_ref())?;
    let mut m = ctx.manifest("chunk", &args)?;
    let cfg = setup::chunking(&args.chunking)?;
    let docs = setup::documents(&args.input)?;
    let mut chunks = Vec::new();
    for d in &docs {
        chunks.extend(
            chunk_document(d, &cfg)
                .with_context(|| format!("document {}", d.id))?
                .chunks,
        );
    }
    write_out(args.output.as_deref(), &chunks)?;
    m.counts.chunks = chunks.len() as u64;
    m.counts.unique_chunks = dedup(&chunks).0.len() as u64;
    if let Some(out) = &args.output {
        write_manifest(&manifest_path(out), &mut m)?;
    }
    log::info!("{} documents, {} chunks", docs.len(), chunks.len());
    Ok(())
}

/// Input of `tag`: whole documents or pre-made chunks.
enum TagInput {
    Docs(Vec<Document>),
    Chunks(Vec<Chunk>),
}

fn read_tag_input(path: &Path) -> Result<TagInput> {
    let rows: Vec<Value> = read_jsonl(path)?;
    if rows.first().is_some_and(|r| r.get("doc_id").is_some()) {
        let mut chunks = Vec::with_capacity(rows.len());
        for (i, r) in rows.into_iter().enumerate() {
            let c: Chunk = serde_json::from_value(r).with_context(|| format!("{}:{}", path.display(), i + 1))?;
            if c.hash != content_hash(&c.text) {
                bail!("{}:{}: hash does not match the chunk text", path.display(), i + 1);
            }
            chunks.push(c);
        }
        Ok(TagInput::Chunks(chunks))
    } else {
        let docs = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| serde_json::from_value(r).with_context(|| format!("{}:{}", path.display(), i + 1)))
            .collect::<Result<_>>()?;
        Ok(TagInput::Docs(docs))
    }
}

#[derive(Serialize)]
struct RenderedDoc<'a> {
    id: &'a str,
    tagged_text: String,
}

#[derive(Serialize)]
struct RenderedChunk<'a> {
    doc_id: &'a str,
    index: usize,
    hash: String,
    tagged_text: String,
}

fn fill_counts(m: &mut RunManifest, chunks: usize, unique: usize, run: &tagforge_core::pipeline::RunCounts) {
    m.counts.chunks = chunks as u64;
    m.counts.unique_chunks = unique as u64;
    m.counts.tagger_calls = run.tagger.invocations;
    m.counts.cache_hits = run.cache_hits;
    m.counts.parse_failures = run.tagger.parse_failures;
    m.counts.fidelity_failures = run.tagger.fidelity_failures;
    m.counts.dropped_spans = run.tagger.dropped_spans;
}

fn fill_cache(m: &mut RunManifest, cache: Option<&TagCache>) -> Result<()> {
    if let Some(c) = cache {
        m.cache = Some(c.stats()?);
        m.cache_counters = Some(c.counters());
    }
    Ok(())
}

pub fn tag(ctx: &Ctx, args: TagArgs) -> Result<()> {
    let args = setup::overlay(args, ctx.config.as_ref())?;
    let mut m = ctx.manifest("tag", &args)?;
    let cats = setup::categories(args.tagging.categories.as_deref())?;
    let cfg = setup::chunking(&args.chunking)?;
    let input = read_tag_input(&args.input)?;
    let tagger = setup::tagger(&args.tagging, &cats)?;
    let cache = setup::cache(&args.tagging)?;

    let all: Vec<Chunk> = match &input {
        TagInput::Chunks(c) => c.clone(),
        TagInput::Docs(docs) => {
            let mut out = Vec::new();
            for d in docs {
                out.extend(
                    chunk_document(d, &cfg)
                        .with_context(|| format!("document {}", d.id))?
                        .chunks,
                );
            }
            out
        }
    };
    let (unique, occ) = match args.dedup {
        DedupScope::Corpus => {
            let (u, occ) = dedup(&all);
            (u, Some(occ))
        }
        DedupScope::Document => {
            let mut u = Vec::new();
            let mut start = 0;
            while start < all.len() {
                let end = start
                    + all[start..]
                        .iter()
                        .take_while(|c| c.doc_id == all[start].doc_id)
                        .count();
                u.extend(dedup(&all[start..end]).0);
                start = end;
            }
            (u, None)
        }
    };
    let run = tag_chunks(
        &unique,
        tagger.as_ref(),
        cache.as_ref(),
        PipelineOptions {
            max_in_flight: args.tagging.max_in_flight.max(1),
        },
    )?;
    log::info!(
        "{} chunks, {} tagged, {} from cache",
        all.len(),
        run.counts.tagged,
        run.counts.cache_hits
    );

    if args.render {
        let policy = setup::policy(args.level);
        let by_hash: HashMap<_, _> = run.results.iter().map(|tc| (tc.chunk.hash, tc.clone())).collect();
        match &input {
            TagInput::Docs(docs) => {
                let occ = match occ {
                    Some(o) => o,
                    None => dedup(&all).1,
                };
                let mut out = Vec::with_capacity(docs.len());
                for d in docs {
                    out.push(RenderedDoc {
                        id: &d.id,
                        tagged_text: reassemble(d, &occ, &by_hash, &policy)?,
                    });
                }
                write_jsonl(&args.output, &out)?;
            }
            TagInput::Chunks(chunks) => {
                let mut out = Vec::with_capacity(chunks.len());
                for c in chunks {
                    let tc = &by_hash[&c.hash];
                    out.push(RenderedChunk {
                        doc_id: &c.doc_id,
                        index: c.index,
                        hash: c.hash.to_hex(),
                        tagged_text: render_tagged_text(&c.text, tc, &policy)?,
                    });
                }
                write_jsonl(&args.output, &out)?;
            }
        }
    } else {
        write_jsonl(&args.output, &run.results)?;
    }

    fill_counts(&mut m, all.len(), unique.len(), &run.counts);
    fill_cache(&mut m, cache.as_ref())?;
    m.tagger = Some(tagger.config().kind.to_string());
    m.category_set_hash = Some(cats.digest());
    write_manifest(&manifest_path(&args.output), &mut m)
}

pub fn render(ctx: &Ctx, args: RenderArgs) -> Result<()> {
    let args = setup::overlay(args, ctx.config.as_ref())?;
    let mut m = ctx.manifest("render", &args)?;
    let cfg = setup::chunking(&args.chunking)?;
    let docs = setup::documents(&args.input)?;
    let tagged: Vec<TaggedChunk> = read_jsonl(&args.tagged)?;
    let by_hash: HashMap<_, _> = tagged.into_iter().map(|tc| (tc.chunk.hash, tc)).collect();
    let mut all = Vec::new();
    for d in &docs {
        all.extend(
            chunk_document(d, &cfg)
                .with_context(|| format!("document {}", d.id))?
                .chunks,
        );
    }
    let (unique, occ) = dedup(&all);
    let policy = setup::policy(args.level);
    let mut out = Vec::with_capacity(docs.len());
    for d in &docs {
        let text = reassemble(d, &occ, &by_hash, &policy)
            .with_context(|| format!("document {} (was --tagged made with the same chunking flags?)", d.id))?;
        out.push(RenderedDoc {
            id: &d.id,
            tagged_text: text,
        });
    }
    write_out(args.output.as_deref(), &out)?;
    m.counts.chunks = all.len() as u64;
    m.counts.unique_chunks = unique.len() as u64;
    if let Some(o) = &args.output {
        write_manifest(&manifest_path(o), &mut m)?;
    }
    Ok(())
}

/// Everything a benchmark run needs besides the suite itself.
struct BenchSetup<'a> {
    name: &'static str,
    suite: EvalSuite,
    oracle: tagforge_core::gateway::MockModel,
    eval: &'a EvalFlags,
    gateway: &'a GatewayOpts,
    chunking: &'a ChunkOpts,
    tagging: &'a TaggerOpts,
}

fn run_bench<T: Serialize>(ctx: &Ctx, args: &T, b: BenchSetup<'_>) -> Result<()> {
    let mut m = ctx.manifest(b.name, args)?;
    let cats = setup::categories(b.tagging.categories.as_deref())?;
    let tagged_mode = b.eval.modes.contains(&PromptMode::TdTc);
    let tagger: Option<Box<dyn Tagger>> = if tagged_mode {
        Some(setup::tagger(b.tagging, &cats)?)
    } else {
        None
    };
    let cache = setup::cache(b.tagging)?;
    let model = setup::model_id(b.gateway.model.as_deref(), b.gateway.gateway)?;
    let llm = setup::language_model(
        b.gateway.gateway,
        b.gateway.fixtures.as_deref(),
        Some(b.oracle),
        b.eval.threads.max(1),
        b.gateway.rate,
    )?;
    let tag_ctx = match &tagger {
        Some(t) => Some(TagContext {
            tagger: t.as_ref(),
            cache: cache.as_ref(),
            chunking: setup::chunking(b.chunking)?,
            policy: Default::default(),
        }),
        None => None,
    };
    let opts = EvalOptions {
        modes: b.eval.modes.clone(),
        model_id: model.clone(),
        max_output_tokens: b.eval.max_output_tokens,
        threads: b.eval.threads.max(1),
        max_records: b.eval.max_records,
    };
    std::fs::create_dir_all(&b.eval.out_dir).with_context(|| format!("{}", b.eval.out_dir.display()))?;
    let results = b.eval.out_dir.join("results.jsonl");
    let outcome = run_eval(&b.suite, &cats, llm.as_ref(), tag_ctx.as_ref(), &opts, &results)?;
    log::info!(
        "{} records written, {} already present{}",
        outcome.written,
        outcome.skipped,
        if outcome.complete {
            ""
        } else {
            "; stopped early, rerun to resume"
        }
    );

    m.model_id = Some(model);
    m.tagger = tagger.as_ref().map(|t| t.config().kind.to_string());
    m.category_set_hash = Some(cats.digest());
    m.counts = bench_counts(&outcome);
    fill_cache(&mut m, cache.as_ref())?;
    write_manifest(&b.eval.out_dir.join("manifest.json"), &mut m)?;
    let report = emit_combined_report(&[(&m, &outcome.records)], default_grouping(&outcome.records));
    write_report(&b.eval.out_dir, &report, &[Format::Md, Format::Csv])
}

fn bench_counts(o: &EvalOutcome) -> StageCounts {
    let t = &o.tagging;
    StageCounts {
        chunks: t.chunks,
        unique_chunks: t.chunks,
        tagger_calls: t.tagger.invocations,
        cache_hits: t.cache_hits,
        parse_failures: t.tagger.parse_failures,
        fidelity_failures: t.tagger.fidelity_failures,
        dropped_spans: t.tagger.dropped_spans,
        records: o.records.len() as u64,
        flagged: o.records.iter().filter(|r| r.flagged).count() as u64,
        errors: o.records.iter().filter(|r| r.error.is_some()).count() as u64,
    }
}

fn write_report(dir: &Path, r: &Report, formats: &[Format]) -> Result<()> {
    let write = |name: &str, body: &str| {
        let p = dir.join(name);
        std::fs::write(&p, body).with_context(|| format!("{}", p.display()))
    };
    if formats.contains(&Format::Md) {
        write("report.md", &r.markdown)?;
    }
    if formats.contains(&Format::Csv) {
        write("report.csv", &r.csv)?;
        if let Some(d) = &r.delta_csv {
            write("report_delta.csv", d)?;
        }
    }
    Ok(())
}

pub fn nolima(ctx: &Ctx, args: NolimaArgs) -> Result<()> {
    let args = setup::overlay(args, ctx.config.as_ref())?;
    let needles: Vec<NeedleSpec> = match (&args.needles, args.synthetic_needles) {
        (Some(p), _) => read_jsonl(p)?,
        (None, Some(n)) => synth::needles(n),
        (None, None) => bail!("pass --needles or --synthetic-needles"),
    };
    for n in &needles {
        n.validate()?;
    }
    let corpus = match &args.haystack_corpus {
        Some(p) => setup::documents(p)?,
        None => synth::corpus(8, 400),
    };
    let builder = HaystackBuilder::new(&corpus, setup::estimator(args.chunking.estimator));
    let selection = match args.selection {
        Selection::All => PositionSelection::All,
        Selection::Rotate => PositionSelection::Rotate,
    };
    let suite = EvalSuite::nolima(
        &builder,
        &needles,
        &args.context_lengths,
        args.positions,
        selection,
        ctx.seed,
    )?;
    log::info!("{} haystacks", suite.instances.len());
    let cats = setup::categories(args.tagging.categories.as_deref())?;
    let setup = BenchSetup {
        name: "bench nolima",
        suite,
        oracle: oracle::needle_oracle(&needles, cats.names()),
        eval: &args.eval,
        gateway: &args.gateway,
        chunking: &args.chunking,
        tagging: &args.tagging,
    };
    run_bench(ctx, &args, setup)
}

pub fn novelqa(ctx: &Ctx, args: NovelqaArgs) -> Result<()> {
    let args = setup::overlay(args, ctx.config.as_ref())?;
    let (books, questions): (Vec<Document>, Vec<McqInstance>) =
        match (&args.books, &args.questions, args.synthetic_books) {
            (Some(b), Some(q), _) => (setup::documents(b)?, read_jsonl(q)?),
            (None, _, Some(n)) => synth::mcq(n, 40),
            _ => bail!("pass --books with --questions, or --synthetic-books"),
        };
    let mode = setup::estimator(args.chunking.estimator);
    let est = match &args.token_counts {
        Some(p) => TokenEstimator::load_counts(mode, p).with_context(|| format!("{}", p.display()))?,
        None => TokenEstimator::new(mode),
    };
    let (suite, removed) = EvalSuite::novelqa(&books, &questions, args.budget, &est);
    log::info!(
        "{} questions kept, {removed} dropped by truncation",
        suite.instances.len()
    );
    let setup = BenchSetup {
        name: "bench novelqa",
        suite,
        oracle: oracle::choice_oracle(&questions),
        eval: &args.eval,
        gateway: &args.gateway,
        chunking: &args.chunking,
        tagging: &args.tagging,
    };
    run_bench(ctx, &args, setup)
}

pub fn report(ctx: &Ctx, args: ReportArgs) -> Result<()> {
    let args = setup::overlay(args, ctx.config.as_ref())?;
    let mut runs = Vec::new();
    for input in &args.inputs {
        let records: Vec<EvalRecord> = read_jsonl(input)?;
        if records.is_empty() {
            bail!("{}: no records", input.display());
        }
        let mpath = input.with_file_name("manifest.json");
        let manifest = if mpath.exists() {
            let raw = std::fs::read_to_string(&mpath).with_context(|| format!("{}", mpath.display()))?;
            serde_json::from_str(&raw).with_context(|| format!("{}", mpath.display()))?
        } else {
            log::warn!("{} not found; model and tagger names unknown", mpath.display());
            RunManifest::new("report", Value::Null, ctx.seed)
        };
        runs.push((manifest, records));
    }
    let all: Vec<EvalRecord> = runs.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
    let group_by = match args.group_by {
        Grouping::Auto => default_grouping(&all),
        Grouping::ContextLength => GroupBy::ContextLength,
        Grouping::Complexity => GroupBy::Complexity,
        Grouping::Mode => GroupBy::Mode,
    };
    let refs: Vec<(&RunManifest, &[EvalRecord])> = runs.iter().map(|(m, r)| (m, r.as_slice())).collect();
    let report = emit_combined_report(&refs, group_by);
    match &args.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("{}", dir.display()))?;
            write_report(dir, &report, &args.format)
        }
        None => {
            let mut out = std::io::stdout().lock();
            if args.format.contains(&Format::Md) {
                out.write_all(report.markdown.as_bytes())?;
            }
            if args.format.contains(&Format::Csv) {
                if args.format.contains(&Format::Md) {
                    writeln!(out)?;
                }
                out.write_all(report.csv.as_bytes())?;
                if let Some(d) = &report.delta_csv {
                    writeln!(out)?;
                    out.write_all(d.as_bytes())?;
                }
            }
            Ok(())
        }
    }
}

pub fn cache(cmd: CacheCommand) -> Result<()> {
    let line = match cmd {
        CacheCommand::Stats { dir } => {
            let c = TagCache::open(&dir).with_context(|| format!("cache {}", dir.display()))?;
            serde_json::to_string(&c.stats()?)?
        }
        CacheCommand::Gc { dir, max_bytes } => {
            let c = TagCache::open(&dir).with_context(|| format!("cache {}", dir.display()))?;
            serde_json::to_string(&c.gc(max_bytes)?)?
        }
    };
    println!("{line}");
    Ok(())
}
