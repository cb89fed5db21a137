//! Taggers turn chunks into [`TaggedChunk`]s.
//!
//! Every strategy leaves the chunk text untouched. LLM information-extraction
//! output is only accepted when stripping its tags gives back the input
//! exactly.

mod bridge;
pub mod categories;
mod gazetteer;
mod llm;
mod prompt;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

pub use bridge::{
    BridgeClient, BridgeError, BridgeProcess, BridgeRequest, BridgeResponse, BridgeTransport, Entity, EntityLabelMap,
    ExternalTagger, FixtureBridge, Handshake, PROTOCOL_NAME, PROTOCOL_VERSION,
};
pub use gazetteer::{tag_gazetteer, GazetteerTagger, Lexicon, LexiconError, Matching};
pub use llm::{
    merge_hybrid, parse_classification_output, ClassificationParse, ClassificationTagger, HybridTagger, IeTagger,
    LlmSettings, ParseError,
};
pub use prompt::{build_classification_prompt, build_ie_prompt, FewShot, PromptTemplate, PromptText, TemplateError};

use crate::annotator::MarkupError;
use crate::gateway::GatewayError;
use crate::model::{canonical_hash, CategorySet, Chunk, Digest, Provenance, TaggedChunk};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaggerKind {
    Gazetteer,
    External,
    LlmClassification,
    LlmIe,
    Hybrid,
}

impl TaggerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaggerKind::Gazetteer => "gazetteer",
            TaggerKind::External => "external",
            TaggerKind::LlmClassification => "llm_classification",
            TaggerKind::LlmIe => "llm_ie",
            TaggerKind::Hybrid => "hybrid",
        }
    }
}

impl std::fmt::Display for TaggerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Kind-specific parameters. Everything here feeds the config hash, so
/// content (lexicons, templates, label maps) is referenced by digest.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggerParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bridge: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_map: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification_template: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ie_template: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fewshot: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_output_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ie_max_output_tokens: Option<u32>,
}

/// Full identity of a tagging run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggerConfig {
    pub kind: TaggerKind,
    pub categories: CategorySet,
    #[serde(default)]
    pub params: TaggerParams,
    pub version: String,
}

impl TaggerConfig {
    pub fn new(kind: TaggerKind, categories: CategorySet) -> Self {
        Self {
            kind,
            categories,
            params: TaggerParams::default(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn with_params(mut self, params: TaggerParams) -> Self {
        self.params = params;
        self
    }

    /// Hash of the canonical JSON form.
    pub fn digest(&self) -> Digest {
        canonical_hash(self).expect("tagger config serializes")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TaggerError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Markup(#[from] MarkupError),
    #[error("no mapping for entity label {0:?}")]
    MappingMissing(String),
    #[error("results refer to different chunks ({0} vs {1})")]
    ChunkMismatch(Digest, Digest),
    #[error("{0}")]
    Io(String),
}

/// Counters shared by a tagging pass. All updates are relaxed atomics.
#[derive(Debug, Default)]
pub struct TaggerStats {
    invocations: AtomicU64,
    parse_failures: AtomicU64,
    fidelity_failures: AtomicU64,
    dropped_spans: AtomicU64,
    rejected_labels: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggerCounts {
    pub invocations: u64,
    pub parse_failures: u64,
    pub fidelity_failures: u64,
    pub dropped_spans: u64,
    pub rejected_labels: u64,
}

impl TaggerStats {
    pub fn record_invocation(&self) {
        self.invocations.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_parse_failure(&self) {
        self.parse_failures.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_fidelity_failure(&self) {
        self.fidelity_failures.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_dropped_spans(&self, n: u64) {
        self.dropped_spans.fetch_add(n, Ordering::Relaxed);
    }

    pub fn record_rejected_labels(&self, n: u64) {
        self.rejected_labels.fetch_add(n, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> TaggerCounts {
        TaggerCounts {
            invocations: self.invocations.load(Ordering::Relaxed),
            parse_failures: self.parse_failures.load(Ordering::Relaxed),
            fidelity_failures: self.fidelity_failures.load(Ordering::Relaxed),
            dropped_spans: self.dropped_spans.load(Ordering::Relaxed),
            rejected_labels: self.rejected_labels.load(Ordering::Relaxed),
        }
    }
}

pub trait Tagger: Send + Sync {
    fn config(&self) -> &TaggerConfig;

    /// Tag one chunk. Implementations call `stats.record_invocation()` once
    /// per chunk they actually process.
    fn tag(&self, chunk: &Chunk, stats: &TaggerStats) -> Result<TaggedChunk, TaggerError>;

    /// Tag several chunks, results in input order.
    fn tag_batch(&self, chunks: &[Chunk], stats: &TaggerStats) -> Result<Vec<TaggedChunk>, TaggerError> {
        chunks.iter().map(|c| self.tag(c, stats)).collect()
    }

    /// Whether `tag` may be called from several threads at once. Taggers that
    /// own a single stateful channel return false and rely on `tag_batch`.
    fn concurrent(&self) -> bool {
        true
    }

    fn provenance(&self) -> Provenance {
        let cfg = self.config();
        Provenance::new(cfg.kind.as_str(), cfg.digest())
    }
}
