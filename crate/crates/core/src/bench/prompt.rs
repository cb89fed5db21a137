//! Question prompts for the three settings: no tags at all, tag definitions
//! only, and tag definitions with tagged context.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotator::contains_tag_token;
use crate::model::CategorySet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Baseline,
    Td,
    TdTc,
}

impl PromptMode {
    pub const ALL: [PromptMode; 3] = [PromptMode::Baseline, PromptMode::Td, PromptMode::TdTc];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::Baseline => "baseline",
            PromptMode::Td => "td",
            PromptMode::TdTc => "td_tc",
        }
    }

    /// Column heading used in reports.
    pub fn label(self) -> &'static str {
        match self {
            PromptMode::Baseline => "Baseline",
            PromptMode::Td => "TD",
            PromptMode::TdTc => "TD+TC",
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(PromptMode::Baseline),
            "td" => Ok(PromptMode::Td),
            "td_tc" | "td+tc" | "tdtc" => Ok(PromptMode::TdTc),
            other => Err(format!("unknown prompt mode {other:?} (baseline, td, td_tc)")),
        }
    }
}

const PERSONA: &str = "You are a careful reader. Answer the question using only the context provided.";

const TAG_INTRO: &str = "Parts of the context may be marked with semantic tags of the form <Name>...</Name>. \
The tags and what they mean:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembledPrompt {
    pub system: String,
    pub user: String,
    /// Tagged-context mode got a context with no tags in it.
    pub mode_mismatch: bool,
}

fn definitions(categories: &CategorySet) -> String {
    let mut s = String::new();
    for c in categories.iter() {
        s.push_str(&format!("\n- {}: {}", c.name, c.definition));
        if !c.examples.is_empty() {
            s.push_str(&format!(" Examples: {}.", c.examples.join(", ")));
        }
    }
    s
}

/// System prompt plus a user prompt carrying the context then the question.
/// For `TdTc` the caller passes the already tagged context; an untagged one
/// is logged and flagged but still used.
pub fn assemble_prompt(context: &str, question: &str, mode: PromptMode, categories: &CategorySet) -> AssembledPrompt {
    let system = match mode {
        PromptMode::Baseline => PERSONA.to_string(),
        PromptMode::Td | PromptMode::TdTc => format!("{PERSONA}\n\n{TAG_INTRO}{}", definitions(categories)),
    };
    let mode_mismatch = mode == PromptMode::TdTc && !contains_tag_token(context, &categories.names());
    if mode_mismatch {
        log::warn!("tagged-context prompt built from a context without tags");
    }
    AssembledPrompt {
        system,
        user: format!("<context>\n{context}\n</context>\n\nQuestion: {question}"),
        mode_mismatch,
    }
}
