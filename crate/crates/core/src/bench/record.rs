//! Evaluation output records.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::dataset::Complexity;
use super::prompt::PromptMode;
use crate::gateway::Usage;

/// Column a record is grouped under in result tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    ContextLength(usize),
    Complexity(Complexity),
    All,
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bucket::ContextLength(cl) => f.write_str(&context_length_label(*cl)),
            Bucket::Complexity(c) => f.write_str(c.label()),
            Bucket::All => f.write_str("All"),
        }
    }
}

/// "CL250", "CL16K": thousands are abbreviated when exact.
pub fn context_length_label(cl: usize) -> String {
    if cl >= 1000 && cl.is_multiple_of(1000) {
        format!("CL{}K", cl / 1000)
    } else {
        format!("CL{cl}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub mode: PromptMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity: Option<Complexity>,
    pub response: String,
    /// Absent exactly when `error` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<u8>,
    /// Empty or unparseable response.
    #[serde(default)]
    pub flagged: bool,
    /// The tagged-context setting received a context without any tags.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub mode_mismatch: bool,
    #[serde(default)]
    pub usage: Usage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvalRecord {
    /// Resume key: one record per instance and mode.
    pub fn key(&self) -> (String, PromptMode) {
        (self.id.clone(), self.mode)
    }

    pub fn bucket(&self) -> Bucket {
        match (self.context_length, self.complexity) {
            (Some(cl), _) => Bucket::ContextLength(cl),
            (None, Some(c)) => Bucket::Complexity(c),
            (None, None) => Bucket::All,
        }
    }
}
