//! Evaluation runs: instances x prompt modes, scored and appended to a JSONL
//! file by a single writer. Re-running against the same file skips every
//! (instance, mode) pair already recorded.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use super::dataset::{Complexity, Letter, McqInstance, NeedleSpec};
use super::haystack::{HaystackBuilder, HaystackError, HaystackSpec};
use super::prompt::{assemble_prompt, PromptMode};
use super::record::EvalRecord;
use super::score::{score_contains, score_mcq};
use super::truncate::truncate_and_filter;
use crate::annotator::MarkupPolicy;
use crate::cache::TagCache;
use crate::chunker::{chunk_document, dedup, reassemble, ChunkingConfig};
use crate::gateway::{CompletionRequest, LanguageModel, Usage};
use crate::io::{read_jsonl, JsonlAppender, JsonlError};
use crate::model::{CategorySet, Document};
use crate::pipeline::{tag_chunks, PipelineOptions, RunCounts};
use crate::taggers::Tagger;
use crate::tokens::TokenEstimator;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    /// Any of these as a case-insensitive substring.
    Contains(Vec<String>),
    Choice(Letter),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalInstance {
    pub id: String,
    /// Index into [`EvalSuite::contexts`].
    pub context: usize,
    pub question: String,
    pub answer: Answer,
    #[serde(default)]
    pub context_length: Option<usize>,
    #[serde(default)]
    pub complexity: Option<Complexity>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSuite {
    pub contexts: Vec<Document>,
    pub instances: Vec<EvalInstance>,
}

/// Which needle positions to instantiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionSelection {
    /// Every needle at every position.
    All,
    /// Needle `i` at position `i mod P` only: one instance per needle and
    /// length, with positions spread evenly over the needle set.
    Rotate,
}

const CONTAINS_HINT: &str = "Answer briefly.";
const CHOICE_HINT: &str = "Answer with the letter of the correct option only.";

impl EvalSuite {
    pub fn nolima(
        builder: &HaystackBuilder,
        needles: &[NeedleSpec],
        context_lengths: &[usize],
        positions: usize,
        selection: PositionSelection,
        seed: u64,
    ) -> Result<Self, HaystackError> {
        let mut suite = EvalSuite::default();
        for &cl in context_lengths {
            for (i, n) in needles.iter().enumerate() {
                let picks: Vec<usize> = match selection {
                    PositionSelection::All => (0..positions).collect(),
                    PositionSelection::Rotate => vec![i % positions],
                };
                for p in picks {
                    let h = builder.build(&HaystackSpec {
                        needle: n.clone(),
                        context_length: cl,
                        position_index: p,
                        positions,
                        seed,
                    })?;
                    suite.instances.push(EvalInstance {
                        id: h.doc.id.clone(),
                        context: suite.contexts.len(),
                        question: format!("{}\n{CONTAINS_HINT}", n.question),
                        answer: Answer::Contains(n.gold_answers.clone()),
                        context_length: Some(cl),
                        complexity: None,
                    });
                    suite.contexts.push(h.doc);
                }
            }
        }
        Ok(suite)
    }

    /// Books truncated to `budget`; questions with cut-off evidence dropped.
    /// Returns the suite and the number of dropped questions.
    pub fn novelqa(
        books: &[Document],
        questions: &[McqInstance],
        budget: usize,
        est: &TokenEstimator,
    ) -> (Self, usize) {
        let mut suite = EvalSuite::default();
        let mut removed = 0;
        for book in books {
            let t = truncate_and_filter(book, questions, budget, est);
            removed += t.removed;
            let ctx = suite.contexts.len();
            for (i, q) in t.kept.iter().enumerate() {
                suite.instances.push(EvalInstance {
                    id: if q.id.is_empty() {
                        format!("{}-{i}", q.book_id)
                    } else {
                        q.id.clone()
                    },
                    context: ctx,
                    question: format!("{}\n{CHOICE_HINT}", q.render_question()),
                    answer: Answer::Choice(q.gold),
                    context_length: None,
                    complexity: Some(q.complexity),
                });
            }
            suite.contexts.push(t.book);
        }
        (suite, removed)
    }
}

/// How contexts are tagged for the tagged-context setting.
pub struct TagContext<'a> {
    pub tagger: &'a dyn Tagger,
    pub cache: Option<&'a TagCache>,
    pub chunking: ChunkingConfig,
    pub policy: MarkupPolicy,
}

impl TagContext<'_> {
    /// Chunk, dedup, tag (through the cache) and reassemble one document.
    pub fn tag_document(&self, doc: &Document) -> Result<(String, RunCounts), String> {
        let chunked = chunk_document(doc, &self.chunking).map_err(|e| e.to_string())?;
        let (unique, occ) = dedup(&chunked.chunks);
        let run = tag_chunks(&unique, self.tagger, self.cache, PipelineOptions { max_in_flight: 1 })
            .map_err(|e| e.to_string())?;
        let map: HashMap<_, _> = run.results.into_iter().map(|tc| (tc.chunk.hash, tc)).collect();
        let text = reassemble(doc, &occ, &map, &self.policy).map_err(|e| e.to_string())?;
        Ok((text, run.counts))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub modes: Vec<PromptMode>,
    pub model_id: String,
    pub max_output_tokens: u32,
    pub threads: usize,
    /// Stop after writing this many new records. Simulates an interrupted
    /// run in tests.
    #[serde(default)]
    pub max_records: Option<usize>,
}

impl EvalOptions {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            modes: PromptMode::ALL.to_vec(),
            model_id: model_id.into(),
            max_output_tokens: 64,
            threads: 4,
            max_records: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("the tagged-context setting needs a tagger")]
    NoTagger,
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("results file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOutcome {
    /// Every record in the results file, sorted by (id, mode).
    pub records: Vec<EvalRecord>,
    pub written: usize,
    pub skipped: usize,
    /// False when stopped early by `max_records`.
    pub complete: bool,
    pub tagging: RunCounts,
}

fn add_counts(into: &mut RunCounts, c: &RunCounts) {
    into.chunks += c.chunks;
    into.cache_hits += c.cache_hits;
    into.tagged += c.tagged;
    into.tagger.invocations += c.tagger.invocations;
    into.tagger.parse_failures += c.tagger.parse_failures;
    into.tagger.fidelity_failures += c.tagger.fidelity_failures;
    into.tagger.dropped_spans += c.tagger.dropped_spans;
    into.tagger.rejected_labels += c.tagger.rejected_labels;
}

struct Runner<'a> {
    suite: &'a EvalSuite,
    categories: &'a CategorySet,
    llm: &'a dyn LanguageModel,
    tagging: Option<&'a TagContext<'a>>,
    opts: &'a EvalOptions,
    tagged: Vec<OnceLock<Result<String, String>>>,
    counts: Mutex<RunCounts>,
}

impl Runner<'_> {
    fn context_for(&self, idx: usize, mode: PromptMode) -> Result<String, String> {
        let doc = &self.suite.contexts[idx];
        if mode != PromptMode::TdTc {
            return Ok(doc.text.clone());
        }
        let tagging = self.tagging.expect("checked before the run");
        self.tagged[idx]
            .get_or_init(|| {
                let (text, c) = tagging.tag_document(doc)?;
                add_counts(&mut self.counts.lock().unwrap(), &c);
                Ok(text)
            })
            .clone()
    }

    fn evaluate(&self, inst: &EvalInstance, mode: PromptMode) -> EvalRecord {
        let mut rec = EvalRecord {
            id: inst.id.clone(),
            mode,
            context_length: inst.context_length,
            complexity: inst.complexity,
            response: String::new(),
            score: None,
            flagged: false,
            mode_mismatch: false,
            usage: Usage::default(),
            error: None,
        };
        let context = match self.context_for(inst.context, mode) {
            Ok(c) => c,
            Err(e) => {
                rec.error = Some(format!("tagging: {e}"));
                return rec;
            }
        };
        let prompt = assemble_prompt(&context, &inst.question, mode, self.categories);
        rec.mode_mismatch = prompt.mode_mismatch;
        let req = CompletionRequest::new(
            &self.opts.model_id,
            prompt.system,
            prompt.user,
            self.opts.max_output_tokens,
        );
        match self.llm.complete(&req) {
            Ok(res) => {
                let (score, flagged) = match &inst.answer {
                    Answer::Contains(gold) => (score_contains(&res.text, gold), res.text.trim().is_empty()),
                    Answer::Choice(gold) => {
                        let s = score_mcq(&res.text, *gold);
                        (s.score, s.unparseable)
                    }
                };
                rec.score = Some(score);
                rec.flagged = flagged;
                rec.usage = res.usage;
                rec.response = res.text;
            }
            Err(e) => rec.error = Some(e.to_string()),
        }
        rec
    }
}

fn load_existing(out: &Path) -> Result<Vec<EvalRecord>, EvalError> {
    if !out.exists() {
        return Ok(Vec::new());
    }
    Ok(read_jsonl(out)?)
}

/// Evaluate every (instance, mode) pair not yet in `out`, appending records
/// as they complete.
pub fn run_eval(
    suite: &EvalSuite,
    categories: &CategorySet,
    llm: &dyn LanguageModel,
    tagging: Option<&TagContext<'_>>,
    opts: &EvalOptions,
    out: &Path,
) -> Result<EvalOutcome, EvalError> {
    if opts.modes.contains(&PromptMode::TdTc) && tagging.is_none() {
        return Err(EvalError::NoTagger);
    }
    let done: HashSet<(String, PromptMode)> = load_existing(out)?.iter().map(EvalRecord::key).collect();
    let mut jobs = Vec::new();
    let mut skipped = 0;
    for (i, inst) in suite.instances.iter().enumerate() {
        for &m in &opts.modes {
            if done.contains(&(inst.id.clone(), m)) {
                skipped += 1;
            } else {
                jobs.push((i, m));
            }
        }
    }

    let runner = Runner {
        suite,
        categories,
        llm,
        tagging,
        opts,
        tagged: (0..suite.contexts.len()).map(|_| OnceLock::new()).collect(),
        counts: Mutex::new(RunCounts::default()),
    };
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let mut appender = JsonlAppender::open(out)?;
    let limit = opts.max_records.unwrap_or(usize::MAX);
    let mut written = 0;

    std::thread::scope(|scope| -> Result<(), EvalError> {
        let (tx, rx) = mpsc::channel::<EvalRecord>();
        for _ in 0..opts.threads.max(1).min(jobs.len().max(1)) {
            let tx = tx.clone();
            let (runner, jobs, next, stop) = (&runner, &jobs, &next, &stop);
            scope.spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    let j = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&(i, m)) = jobs.get(j) else { break };
                    let rec = runner.evaluate(&suite.instances[i], m);
                    if tx.send(rec).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);
        for rec in rx {
            if written >= limit {
                break;
            }
            appender.append(&rec)?;
            written += 1;
            if written >= limit {
                stop.store(true, Ordering::Relaxed);
            }
        }
        stop.store(true, Ordering::Relaxed);
        Ok(())
    })?;

    // one record per key, first write wins
    let mut by_key: BTreeMap<(String, PromptMode), EvalRecord> = BTreeMap::new();
    for r in load_existing(out)? {
        by_key.entry(r.key()).or_insert(r);
    }
    let tagging_counts = runner.counts.into_inner().unwrap();
    Ok(EvalOutcome {
        records: by_key.into_values().collect(),
        written,
        skipped,
        complete: written == jobs.len(),
        tagging: tagging_counts,
    })
}
