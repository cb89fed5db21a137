//! Document segmentation, de-duplication and reassembly.

mod sentence;

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use sentence::{paragraphs, sentences, sentences_in, words};

use crate::annotator::{render_tagged_text, MarkupError, MarkupPolicy};
use crate::model::{normalize, Chunk, Digest, Document, TaggedChunk};
use crate::tokens::EstimatorMode;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkStrategy {
    #[default]
    Sentence,
    Paragraph,
    TokenWindow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingConfig {
    pub strategy: ChunkStrategy,
    /// Token budget per chunk, as measured by `estimator`.
    pub max_chunk_size: usize,
    /// Token overlap between consecutive windows. Only [`token_windows`]
    /// honours it; chunks fed to the markup pipeline must not overlap.
    #[serde(default)]
    pub overlap: usize,
    #[serde(default)]
    pub estimator: EstimatorMode,
}

impl ChunkingConfig {
    pub fn new(strategy: ChunkStrategy, max_chunk_size: usize) -> Self {
        Self {
            strategy,
            max_chunk_size,
            overlap: 0,
            estimator: EstimatorMode::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ChunkError> {
        if self.max_chunk_size == 0 {
            return Err(ChunkError::InvalidConfig("max_chunk_size must be at least 1".into()));
        }
        if self.overlap >= self.max_chunk_size {
            return Err(ChunkError::InvalidConfig(format!(
                "overlap {} must be smaller than max_chunk_size {}",
                self.overlap, self.max_chunk_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChunkError {
    #[error("document {0:?} is empty")]
    EmptyDocument(String),
    #[error("invalid chunking config: {0}")]
    InvalidConfig(String),
    #[error("overlapping windows cannot be reassembled; use token_windows() for overlap > 0")]
    OverlapNotReassemblable,
    #[error("no tagged chunk for hash {0}")]
    MissingTaggedChunk(Digest),
    #[error(transparent)]
    Markup(#[from] MarkupError),
}

/// Chunks of one document together with the exact text between them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkedDocument {
    pub doc_id: String,
    pub chunks: Vec<Chunk>,
    /// `chunks.len() + 1` entries: text before the first chunk, each gap, and
    /// text after the last chunk.
    pub separators: Vec<String>,
}

impl ChunkedDocument {
    /// Interleave separators and chunk texts.
    pub fn reconstruct(&self) -> String {
        let mut out = String::new();
        for (sep, chunk) in self.separators.iter().zip(&self.chunks) {
            out.push_str(sep);
            out.push_str(&chunk.text);
        }
        if let Some(last) = self.separators.last() {
            out.push_str(last);
        }
        out
    }
}

/// Greedily pack consecutive unit ranges while the covering slice stays within
/// budget. A unit that alone exceeds the budget becomes its own flagged range.
fn pack(text: &str, units: &[Range<usize>], budget: usize, est: EstimatorMode) -> Vec<(Range<usize>, bool)> {
    let mut out = Vec::new();
    let mut current: Option<Range<usize>> = None;
    for unit in units {
        if let Some(cur) = &current {
            let merged = cur.start..unit.end;
            if est.estimate(&text[merged.clone()]) <= budget {
                current = Some(merged);
                continue;
            }
            out.push((cur.clone(), false));
            current = None;
        }
        if est.estimate(&text[unit.clone()]) > budget {
            out.push((unit.clone(), true));
        } else {
            current = Some(unit.clone());
        }
    }
    out.extend(current.map(|c| (c, false)));
    out
}

fn ranges_for(doc: &Document, cfg: &ChunkingConfig) -> Vec<(Range<usize>, bool)> {
    let text = doc.text.as_str();
    let est = cfg.estimator;
    let budget = cfg.max_chunk_size;
    match cfg.strategy {
        ChunkStrategy::Sentence => pack(text, &sentences(text), budget, est),
        ChunkStrategy::TokenWindow => pack(text, &words(text), budget, est),
        ChunkStrategy::Paragraph => {
            // oversized paragraphs fall back to sentence packing
            let mut units: Vec<Range<usize>> = Vec::new();
            let mut out = Vec::new();
            for para in paragraphs(text) {
                if est.estimate(&text[para.clone()]) <= budget {
                    units.push(para);
                    continue;
                }
                out.extend(pack(text, &units, budget, est));
                units.clear();
                out.extend(pack(text, &sentences_in(text, para), budget, est));
            }
            out.extend(pack(text, &units, budget, est));
            out
        }
    }
}

/// Segment a document into ordered, non-overlapping chunks.
pub fn chunk(doc: &Document, cfg: &ChunkingConfig) -> Result<Vec<Chunk>, ChunkError> {
    cfg.validate()?;
    if cfg.overlap > 0 {
        return Err(ChunkError::OverlapNotReassemblable);
    }
    if doc.text.trim().is_empty() {
        return Err(ChunkError::EmptyDocument(doc.id.clone()));
    }
    Ok(ranges_for(doc, cfg)
        .into_iter()
        .enumerate()
        .map(|(index, (range, oversized))| {
            let mut c = Chunk::from_document(doc, index, range.start, range.end);
            c.oversized = oversized;
            c
        })
        .collect())
}

/// [`chunk`] plus the separators needed to rebuild the document exactly.
pub fn chunk_document(doc: &Document, cfg: &ChunkingConfig) -> Result<ChunkedDocument, ChunkError> {
    let chunks = chunk(doc, cfg)?;
    let mut separators = Vec::with_capacity(chunks.len() + 1);
    let mut pos = 0;
    for c in &chunks {
        separators.push(doc.text[pos..c.start].to_string());
        pos = c.end;
    }
    separators.push(doc.text[pos..].to_string());
    Ok(ChunkedDocument {
        doc_id: doc.id.clone(),
        chunks,
        separators,
    })
}

/// Token windows over words with `cfg.overlap` tokens carried over between
/// consecutive windows. These may overlap and so are not reassemblable.
pub fn token_windows(doc: &Document, cfg: &ChunkingConfig) -> Result<Vec<Chunk>, ChunkError> {
    cfg.validate()?;
    if doc.text.trim().is_empty() {
        return Err(ChunkError::EmptyDocument(doc.id.clone()));
    }
    let text = doc.text.as_str();
    let est = cfg.estimator;
    let units = words(text);
    let mut out = Vec::new();
    let mut i = 0;
    while i < units.len() {
        let start = units[i].start;
        let mut j = i;
        while j + 1 < units.len() && est.estimate(&text[start..units[j + 1].end]) <= cfg.max_chunk_size {
            j += 1;
        }
        let mut c = Chunk::from_document(doc, out.len(), start, units[j].end);
        c.oversized = est.estimate(&c.text) > cfg.max_chunk_size;
        out.push(c);
        if j + 1 >= units.len() {
            break;
        }
        // step back while the carried-over tail fits the overlap budget
        let mut next = j + 1;
        while next > i + 1 && cfg.overlap > 0 && est.estimate(&text[units[next - 1].start..units[j].end]) <= cfg.overlap
        {
            next -= 1;
        }
        i = next;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occurrence {
    pub doc_id: String,
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

impl From<&Chunk> for Occurrence {
    fn from(c: &Chunk) -> Self {
        Self {
            doc_id: c.doc_id.clone(),
            index: c.index,
            start: c.start,
            end: c.end,
        }
    }
}

/// Chunk hash to every place a chunk with that normalized text occurs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccurrenceMap {
    entries: BTreeMap<Digest, Vec<Occurrence>>,
}

impl OccurrenceMap {
    pub fn insert(&mut self, chunk: &Chunk) {
        self.entries.entry(chunk.hash).or_default().push(chunk.into());
    }

    pub fn get(&self, hash: &Digest) -> Option<&[Occurrence]> {
        self.entries.get(hash).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Digest, &[Occurrence])> {
        self.entries.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn total_occurrences(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    /// Occurrences inside one document, ordered by start offset.
    pub fn in_document(&self, doc_id: &str) -> Vec<(Digest, &Occurrence)> {
        let mut out: Vec<(Digest, &Occurrence)> = self
            .entries
            .iter()
            .flat_map(|(h, occ)| occ.iter().filter(|o| o.doc_id == doc_id).map(move |o| (*h, o)))
            .collect();
        out.sort_by_key(|(_, o)| o.start);
        out
    }
}

/// Keep the first chunk of each distinct normalized text.
pub fn dedup(chunks: &[Chunk]) -> (Vec<Chunk>, OccurrenceMap) {
    let mut occ = OccurrenceMap::default();
    let mut unique = Vec::new();
    for c in chunks {
        if occ.get(&c.hash).is_none() {
            unique.push(c.clone());
        }
        occ.insert(c);
    }
    (unique, occ)
}

/// Count distinct normalized chunk texts. Cheap cross-check for [`dedup`].
pub fn distinct_normalized(chunks: &[Chunk]) -> usize {
    let mut seen: HashMap<String, ()> = HashMap::new();
    for c in chunks {
        seen.insert(normalize(&c.text), ());
    }
    seen.len()
}

/// Rebuild `doc` with every chunk occurrence replaced by its rendered markup.
/// Text outside chunks is copied unchanged.
pub fn reassemble<S: std::hash::BuildHasher>(
    doc: &Document,
    occ: &OccurrenceMap,
    tagged: &HashMap<Digest, TaggedChunk, S>,
    policy: &MarkupPolicy,
) -> Result<String, ChunkError> {
    let mut out = String::with_capacity(doc.text.len() + doc.text.len() / 4);
    let mut pos = 0;
    for (hash, o) in occ.in_document(&doc.id) {
        let tc = tagged.get(&hash).ok_or(ChunkError::MissingTaggedChunk(hash))?;
        out.push_str(&doc.text[pos..o.start]);
        out.push_str(&render_tagged_text(&doc.text[o.start..o.end], tc, policy)?);
        pos = o.end;
    }
    out.push_str(&doc.text[pos..]);
    Ok(out)
}
