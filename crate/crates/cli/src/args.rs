use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use tagforge_core::bench::PromptMode;

#[derive(Debug, Parser)]
#[command(
    name = "tagforge",
    version,
    about = "Semantic tagging of long contexts, and the benchmarks to measure it"
)]
pub struct Cli {
    /// JSON object whose keys override the subcommand's flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split documents into chunks.
    Chunk(ChunkArgs),
    /// Tag the distinct chunks of a corpus.
    Tag(TagArgs),
    /// Rebuild documents with inline tags from tagged chunks.
    Render(RenderArgs),
    /// Run a benchmark.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Tables from one or more results files.
    Report(ReportArgs),
    /// Inspect or trim the tag cache.
    #[command(subcommand)]
    Cache(CacheCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Sentence,
    Paragraph,
    TokenWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// ceil(chars / 4)
    Chars,
    /// ceil(words * 4 / 3)
    Words,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ChunkOpts {
    #[arg(long, value_enum, default_value = "sentence")]
    pub strategy: Strategy,
    /// Token budget per chunk.
    #[arg(long, default_value_t = 256)]
    pub max_chunk_size: usize,
    #[arg(long, value_enum, default_value = "chars")]
    pub estimator: Estimator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaggerChoice {
    Gazetteer,
    External,
    LlmClassification,
    LlmIe,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GatewayChoice {
    /// Answers from the gold data (benchmarks only).
    Oracle,
    /// Always answers with an empty string.
    Empty,
    /// Serve recorded responses; a miss is an error.
    Replay,
    /// Call the HTTP endpoint and record every response.
    Record,
    /// Call the HTTP endpoint configured by TAGFORGE_* variables.
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    Chunk,
    Entity,
    Both,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TaggerOpts {
    #[arg(long, value_enum, default_value = "gazetteer")]
    pub tagger: TaggerChoice,
    /// JSON list of {name, definition, examples}. Defaults to the 18 NER types.
    #[arg(long)]
    pub categories: Option<PathBuf>,
    /// Gazetteer phrases, {"Category": ["phrase", ...]}.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub case_insensitive: bool,
    /// Command line of an external NER bridge process.
    #[arg(long)]
    pub bridge_cmd: Option<String>,
    /// Recorded bridge transcript used instead of a live process.
    #[arg(long)]
    pub bridge_fixture: Option<PathBuf>,
    /// Entity label to category map for the external tagger.
    #[arg(long)]
    pub label_map: Option<PathBuf>,
    #[arg(long)]
    pub classification_template: Option<PathBuf>,
    #[arg(long)]
    pub ie_template: Option<PathBuf>,
    /// Model used by the LLM taggers.
    #[arg(long, value_enum, default_value = "http")]
    pub tag_gateway: GatewayChoice,
    #[arg(long)]
    pub tag_fixtures: Option<PathBuf>,
    #[arg(long)]
    pub tag_model: Option<String>,
    /// Tag cache directory.
    #[arg(long, env = "TAGFORGE_CACHE")]
    pub cache: Option<PathBuf>,
    /// Chunks tagged at once.
    #[arg(long, default_value_t = 8)]
    pub max_in_flight: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GatewayOpts {
    /// Model that answers benchmark questions.
    #[arg(long, value_enum, default_value = "http")]
    pub gateway: GatewayChoice,
    /// Replay fixture directory for the replay and record gateways.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Model id sent with every request. Defaults to TAGFORGE_MODEL.
    #[arg(long)]
    pub model: Option<String>,
    /// Requests per second, unlimited when absent.
    #[arg(long)]
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ChunkArgs {
    /// Documents, one JSON object per line.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Chunks as JSONL. Standard output when absent.
    #[arg(long = "out")]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub chunking: ChunkOpts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DedupScope {
    /// Identical chunks anywhere in the input are tagged once.
    Corpus,
    /// Identical chunks are shared within a document only.
    Document,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TagArgs {
    /// Documents ({id, text}) or chunks from `tagforge chunk`.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// One tagged chunk per distinct chunk text, or rendered text with --render.
    #[arg(long = "out")]
    pub output: PathBuf,
    /// Write {"id", "tagged_text"} per document (per chunk for chunk input).
    #[arg(long)]
    pub render: bool,
    #[arg(long, value_enum, default_value = "both")]
    pub level: Level,
    #[arg(long, value_enum, default_value = "corpus")]
    pub dedup: DedupScope,
    #[command(flatten)]
    #[serde(flatten)]
    pub chunking: ChunkOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub tagging: TaggerOpts,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RenderArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output of `tag` for the same documents and chunking flags.
    #[arg(long)]
    pub tagged: PathBuf,
    #[arg(long = "out")]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub chunking: ChunkOpts,
    #[arg(long, value_enum, default_value = "both")]
    pub level: Level,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Needle-in-a-haystack questions at several context lengths.
    Nolima(NolimaArgs),
    /// Multiple-choice questions over truncated books.
    Novelqa(NovelqaArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    All,
    Rotate,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalFlags {
    #[arg(
        long = "mode",
        visible_alias = "modes",
        value_delimiter = ',',
        default_value = "baseline,td,td_tc"
    )]
    pub modes: Vec<PromptMode>,
    #[arg(long, default_value_t = 64)]
    pub max_output_tokens: u32,
    #[arg(long, default_value_t = 4)]
    pub threads: usize,
    /// Stop after this many new records; rerun to resume.
    #[arg(long)]
    pub max_records: Option<usize>,
    /// Results, manifest and report land here.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct NolimaArgs {
    /// Needle-question pairs as JSONL.
    #[arg(long, conflicts_with = "synthetic_needles")]
    pub needles: Option<PathBuf>,
    /// Generate this many synthetic needles instead.
    #[arg(long)]
    pub synthetic_needles: Option<usize>,
    /// Filler documents. A synthetic corpus when absent.
    #[arg(long)]
    pub haystack_corpus: Option<PathBuf>,
    /// Context lengths in estimated tokens.
    #[arg(
        long = "cl",
        visible_alias = "context-lengths",
        value_delimiter = ',',
        default_value = "250,500,16000,32000"
    )]
    pub context_lengths: Vec<usize>,
    #[arg(long, default_value_t = 26)]
    pub positions: usize,
    #[arg(long, value_enum, default_value = "all")]
    pub selection: Selection,
    #[command(flatten)]
    #[serde(flatten)]
    pub eval: EvalFlags,
    #[command(flatten)]
    #[serde(flatten)]
    pub gateway: GatewayOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub chunking: ChunkOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub tagging: TaggerOpts,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct NovelqaArgs {
    /// Books as JSONL documents.
    #[arg(long, requires = "questions", conflicts_with = "synthetic_books")]
    pub books: Option<PathBuf>,
    #[arg(long)]
    pub questions: Option<PathBuf>,
    /// Generate this many small synthetic books instead.
    #[arg(long)]
    pub synthetic_books: Option<usize>,
    /// Books are cut to this many tokens; questions about the cut part are dropped.
    #[arg(long, default_value_t = 180_000)]
    pub budget: usize,
    /// Exact per-book token counts, {"book-id": tokens}.
    #[arg(long)]
    pub token_counts: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub eval: EvalFlags,
    #[command(flatten)]
    #[serde(flatten)]
    pub gateway: GatewayOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub chunking: ChunkOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub tagging: TaggerOpts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    Auto,
    ContextLength,
    Complexity,
    Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Md,
    Csv,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// Results files written by `bench`. A manifest.json next to each one
    /// supplies the model and tagger names. Repeat to combine runs.
    #[arg(long = "in", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "md,csv")]
    pub format: Vec<Format>,
    #[arg(long, value_enum, default_value = "auto")]
    pub group_by: Grouping,
    /// Write report.md / report.csv / report_delta.csv here instead of
    /// printing to standard output.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CacheCommand {
    /// Entry count and size.
    Stats {
        #[arg(long, env = "TAGFORGE_CACHE")]
        dir: PathBuf,
    },
    /// Remove the oldest entries until the cache fits.
    Gc {
        #[arg(long, env = "TAGFORGE_CACHE")]
        dir: PathBuf,
        #[arg(long)]
        max_bytes: u64,
    },
}
