//! Token-count estimation.
//!
//! Hosted model tokenizers are not available offline, so budgets are measured
//! with a cheap monotone estimator. Users with tokenizer access can supply
//! exact per-instance counts through [`TokenEstimator::with_counts`].

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    /// `ceil(chars / 4)`
    #[default]
    CharsDiv4,
    /// `ceil(words * 4 / 3)` over whitespace-separated words.
    WhitespaceWordsX4over3,
}

impl EstimatorMode {
    pub fn estimate(self, text: &str) -> usize {
        match self {
            EstimatorMode::CharsDiv4 => text.chars().count().div_ceil(4),
            EstimatorMode::WhitespaceWordsX4over3 => (text.split_whitespace().count() * 4).div_ceil(3),
        }
    }
}

/// Running estimate for pieces joined by single spaces. Exact for both
/// modes as long as each piece has no leading or trailing whitespace.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TokenTally {
    mode: EstimatorMode,
    chars: usize,
    words: usize,
    pieces: usize,
}

impl TokenTally {
    pub fn new(mode: EstimatorMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn push(&mut self, piece: &str) {
        if self.pieces > 0 {
            self.chars += 1;
        }
        self.chars += piece.chars().count();
        self.words += piece.split_whitespace().count();
        self.pieces += 1;
    }

    /// Estimate if `piece` were pushed, without pushing it.
    pub fn with(&self, piece: &str) -> usize {
        let mut next = *self;
        next.push(piece);
        next.estimate()
    }

    pub fn estimate(&self) -> usize {
        match self.mode {
            EstimatorMode::CharsDiv4 => self.chars.div_ceil(4),
            EstimatorMode::WhitespaceWordsX4over3 => (self.words * 4).div_ceil(3),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenEstimator {
    mode: EstimatorMode,
    counts: HashMap<String, usize>,
}

impl TokenEstimator {
    pub fn new(mode: EstimatorMode) -> Self {
        Self {
            mode,
            counts: HashMap::new(),
        }
    }

    /// Exact counts keyed by instance id. Text without a known id falls back
    /// to `mode`.
    pub fn with_counts(mode: EstimatorMode, counts: HashMap<String, usize>) -> Self {
        Self { mode, counts }
    }

    /// Load a JSON object `{instance_id: token_count}`.
    pub fn load_counts(mode: EstimatorMode, path: &Path) -> std::io::Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let counts: HashMap<String, usize> =
            serde_json::from_str(&raw).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Self::with_counts(mode, counts))
    }

    pub fn mode(&self) -> EstimatorMode {
        self.mode
    }

    pub fn estimate(&self, text: &str) -> usize {
        self.mode.estimate(text)
    }

    pub fn estimate_instance(&self, id: &str, text: &str) -> usize {
        self.counts.get(id).copied().unwrap_or_else(|| self.estimate(text))
    }
}
