//! Needle-in-a-haystack contexts.
//!
//! Filler is a seeded shuffle of whole sentences drawn from a source corpus,
//! joined by single spaces, with the final sentence cut at a word boundary to
//! land on the token budget. The needle goes in at the sentence boundary
//! nearest `position_index / (positions - 1)` of the filler.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::NeedleSpec;
use crate::chunker::{sentences, words};
use crate::model::Document;
use crate::tokens::{EstimatorMode, TokenTally};

pub const DEFAULT_POSITIONS: usize = 26;

/// Allowed relative deviation from the token budget.
pub const BUDGET_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HaystackSpec {
    pub needle: NeedleSpec,
    /// Target size in estimated tokens, needle included.
    pub context_length: usize,
    pub position_index: usize,
    #[serde(default = "default_positions")]
    pub positions: usize,
    pub seed: u64,
}

fn default_positions() -> usize {
    DEFAULT_POSITIONS
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HaystackError {
    #[error("corpus too small: reached {have} of {want} tokens")]
    CorpusTooSmall { have: usize, want: usize },
    #[error("needle text occurs in every candidate filler or across a join")]
    NeedleCollision,
    #[error("position {index} outside 0..{positions}")]
    BadPosition { index: usize, positions: usize },
    #[error("needle {0} is empty")]
    EmptyNeedle(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Haystack {
    pub doc: Document,
    /// Byte offset of the needle in `doc.text`.
    pub needle_offset: usize,
    pub estimated_tokens: usize,
}

/// Sentence pool extracted once from a corpus and reused for every spec.
#[derive(Debug, Clone)]
pub struct HaystackBuilder {
    pool: Vec<String>,
    mode: EstimatorMode,
}

impl HaystackBuilder {
    pub fn new(corpus: &[Document], mode: EstimatorMode) -> Self {
        let mut pool = Vec::new();
        for d in corpus {
            for r in sentences(&d.text) {
                // keep each snippet on one line so joins stay single spaces
                let s = d.text[r].split_whitespace().collect::<Vec<_>>().join(" ");
                if !s.is_empty() {
                    pool.push(s);
                }
            }
        }
        Self { pool, mode }
    }

    pub fn pool_len(&self) -> usize {
        self.pool.len()
    }

    fn needle_text(spec: &HaystackSpec) -> String {
        spec.needle.needle_text.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    /// Filler snippets for one budget. Independent of the needle position, so
    /// every position of a (needle, length, seed) shares the same filler.
    fn filler(&self, needle: &str, budget: usize, seed: u64) -> Result<Vec<String>, HaystackError> {
        let mut order: Vec<usize> = (0..self.pool.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut tally = TokenTally::new(self.mode);
        tally.push(needle);
        let low = budget as f64 * (1.0 - BUDGET_TOLERANCE);
        let mut out = Vec::new();
        let mut collisions = 0;
        for i in order {
            let s = &self.pool[i];
            if s.contains(needle) {
                collisions += 1;
                continue;
            }
            if tally.with(s) <= budget {
                tally.push(s);
                out.push(s.clone());
                continue;
            }
            // cut this sentence at the longest word prefix that still fits
            let mut cut = None;
            for w in words(s) {
                if tally.with(&s[..w.end]) <= budget {
                    cut = Some(w.end);
                } else {
                    break;
                }
            }
            if let Some(end) = cut {
                tally.push(&s[..end]);
                out.push(s[..end].to_string());
            }
            if tally.estimate() as f64 >= low {
                break;
            }
        }
        if (tally.estimate() as f64) < low {
            if collisions > 0 && collisions == self.pool.len() {
                return Err(HaystackError::NeedleCollision);
            }
            return Err(HaystackError::CorpusTooSmall {
                have: tally.estimate(),
                want: budget,
            });
        }
        Ok(out)
    }

    pub fn build(&self, spec: &HaystackSpec) -> Result<Haystack, HaystackError> {
        if spec.positions < 2 || spec.position_index >= spec.positions {
            return Err(HaystackError::BadPosition {
                index: spec.position_index,
                positions: spec.positions,
            });
        }
        let needle = Self::needle_text(spec);
        if needle.is_empty() {
            return Err(HaystackError::EmptyNeedle(spec.needle.id.clone()));
        }
        let filler = self.filler(&needle, spec.context_length, spec.seed)?;

        // boundary k sits before filler[k]; pick the one whose preceding
        // token count is nearest the target fraction (earliest on ties)
        let mut before = Vec::with_capacity(filler.len() + 1);
        let mut tally = TokenTally::new(self.mode);
        before.push(0usize);
        for s in &filler {
            tally.push(s);
            before.push(tally.estimate());
        }
        let total = *before.last().expect("nonempty");
        let target = total as f64 * spec.position_index as f64 / (spec.positions - 1) as f64;
        let k = before
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = (*a.1 as f64 - target).abs();
                let db = (*b.1 as f64 - target).abs();
                da.total_cmp(&db).then(a.0.cmp(&b.0))
            })
            .map(|(i, _)| i)
            .expect("nonempty");

        let mut parts: Vec<&str> = filler.iter().map(String::as_str).collect();
        parts.insert(k, &needle);
        let text = parts.join(" ");
        let needle_offset: usize = parts[..k].iter().map(|p| p.len() + 1).sum();
        if text.matches(needle.as_str()).count() != 1 {
            return Err(HaystackError::NeedleCollision);
        }
        let estimated_tokens = self.mode.estimate(&text);
        let mut meta = BTreeMap::new();
        meta.insert("needle_id".into(), spec.needle.id.clone());
        meta.insert("context_length".into(), spec.context_length.to_string());
        meta.insert("position_index".into(), spec.position_index.to_string());
        meta.insert("needle_offset".into(), needle_offset.to_string());
        let mut doc = Document::new(
            format!("{}-cl{}-p{}", spec.needle.id, spec.context_length, spec.position_index),
            text,
        );
        doc.meta = meta;
        Ok(Haystack {
            doc,
            needle_offset,
            estimated_tokens,
        })
    }
}

/// One-off build. Prefer [`HaystackBuilder`] when building many haystacks
/// from the same corpus.
pub fn build_haystack(
    spec: &HaystackSpec,
    corpus: &[Document],
    mode: EstimatorMode,
) -> Result<Haystack, HaystackError> {
    HaystackBuilder::new(corpus, mode).build(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::synth;

    fn needle() -> NeedleSpec {
        synth::needles(1).remove(0)
    }

    fn spec(cl: usize, pos: usize) -> HaystackSpec {
        HaystackSpec {
            needle: needle(),
            context_length: cl,
            position_index: pos,
            positions: DEFAULT_POSITIONS,
            seed: 7,
        }
    }

    #[test]
    fn first_and_last_position() {
        let b = HaystackBuilder::new(&synth::corpus(3, 400), EstimatorMode::CharsDiv4);
        for (pos, lo, hi) in [(0, 0.0, 0.1), (DEFAULT_POSITIONS - 1, 0.9, 1.0)] {
            let h = b.build(&spec(250, pos)).unwrap();
            // oracle: estimate the prefix before the needle independently
            let before = h.doc.text[..h.needle_offset].chars().count().div_ceil(4);
            let total = h.doc.text.chars().count().div_ceil(4);
            assert!((245..=255).contains(&total), "{total}");
            let end = before + needle().needle_text.chars().count().div_ceil(4);
            if pos == 0 {
                assert!(before as f64 <= lo + 0.1 * total as f64, "{before}/{total}");
            } else {
                assert!(
                    before as f64 >= lo * total as f64 && end as f64 <= hi * total as f64 + 1.0,
                    "{before}..{end}/{total}"
                );
            }
            assert_eq!(h.doc.text.matches(&needle().needle_text).count(), 1);
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let corpus = synth::corpus(3, 400);
        let b = HaystackBuilder::new(&corpus, EstimatorMode::CharsDiv4);
        assert_eq!(b.build(&spec(500, 4)).unwrap(), b.build(&spec(500, 4)).unwrap());
        let mut other = spec(500, 4);
        other.seed = 8;
        assert_ne!(
            b.build(&spec(500, 4)).unwrap().doc.text,
            b.build(&other).unwrap().doc.text
        );
    }

    #[test]
    fn monotone_positions() {
        let b = HaystackBuilder::new(&synth::corpus(3, 400), EstimatorMode::CharsDiv4);
        let offsets: Vec<usize> = (0..DEFAULT_POSITIONS)
            .map(|p| b.build(&spec(500, p)).unwrap().needle_offset)
            .collect();
        assert!(offsets.windows(2).all(|w| w[0] <= w[1]), "{offsets:?}");
        assert!(offsets[0] < offsets[DEFAULT_POSITIONS - 1]);
    }

    #[test]
    fn errors() {
        let small = HaystackBuilder::new(&[Document::new("x", "One sentence only.")], EstimatorMode::CharsDiv4);
        assert!(matches!(
            small.build(&spec(250, 0)),
            Err(HaystackError::CorpusTooSmall { .. })
        ));
        let all_needles = HaystackBuilder::new(&[Document::new("x", &needle().needle_text)], EstimatorMode::CharsDiv4);
        assert_eq!(all_needles.build(&spec(250, 0)), Err(HaystackError::NeedleCollision));
        let b = HaystackBuilder::new(&synth::corpus(1, 50), EstimatorMode::CharsDiv4);
        assert!(matches!(
            b.build(&spec(250, 26)),
            Err(HaystackError::BadPosition { .. })
        ));
    }

    #[test]
    fn needle_in_corpus_is_redrawn() {
        let mut corpus = synth::corpus(3, 400);
        corpus[0].text = format!("{} {}", needle().needle_text, corpus[0].text);
        let b = HaystackBuilder::new(&corpus, EstimatorMode::CharsDiv4);
        let h = b.build(&spec(500, 10)).unwrap();
        assert_eq!(h.doc.text.matches(&needle().needle_text).count(), 1);
    }
}
