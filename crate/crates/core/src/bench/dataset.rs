//! Benchmark dataset records.

use std::fmt;

use serde::{Deserialize, Serialize};

/// One needle-question pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeedleSpec {
    pub id: String,
    pub needle_text: String,
    pub question: String,
    /// Contains-match targets.
    pub gold_answers: Vec<String>,
    #[serde(default)]
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DatasetError {
    #[error("needle {0}: needle_text is empty")]
    EmptyNeedle(String),
    #[error("needle {0}: no gold answers")]
    NoGold(String),
}

impl NeedleSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.needle_text.trim().is_empty() {
            return Err(DatasetError::EmptyNeedle(self.id.clone()));
        }
        if self.gold_answers.iter().all(|g| g.trim().is_empty()) {
            return Err(DatasetError::NoGold(self.id.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Letter {
    A,
    B,
    C,
    D,
}

impl Letter {
    pub const ALL: [Letter; 4] = [Letter::A, Letter::B, Letter::C, Letter::D];

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'A' => Some(Letter::A),
            'B' => Some(Letter::B),
            'C' => Some(Letter::C),
            'D' => Some(Letter::D),
            _ => None,
        }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqOptions {
    #[serde(rename = "A")]
    pub a: String,
    #[serde(rename = "B")]
    pub b: String,
    #[serde(rename = "C")]
    pub c: String,
    #[serde(rename = "D")]
    pub d: String,
}

impl McqOptions {
    pub fn get(&self, l: Letter) -> &str {
        match l {
            Letter::A => &self.a,
            Letter::B => &self.b,
            Letter::C => &self.c,
            Letter::D => &self.d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Complexity {
    SingleHop,
    MultiHop,
    Detail,
}

impl Complexity {
    pub const ALL: [Complexity; 3] = [Complexity::SingleHop, Complexity::MultiHop, Complexity::Detail];

    pub fn label(self) -> &'static str {
        match self {
            Complexity::SingleHop => "Single-hop",
            Complexity::MultiHop => "Multi-hop",
            Complexity::Detail => "Detail",
        }
    }
}

/// A multiple-choice question about one book.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqInstance {
    #[serde(default)]
    pub id: String,
    pub book_id: String,
    pub question: String,
    pub options: McqOptions,
    pub gold: Letter,
    pub complexity: Complexity,
    /// Byte offset of the supporting evidence in the book. Needed to drop
    /// questions whose evidence is cut off by truncation.
    pub evidence_offset: usize,
}

impl McqInstance {
    /// Question followed by the four options, one per line.
    pub fn render_question(&self) -> String {
        let mut s = self.question.clone();
        for l in Letter::ALL {
            s.push_str(&format!("\n{l}. {}", self.options.get(l)));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mcq_json_shape() {
        let raw = r#"{"book_id":"b","question":"Who?","options":{"A":"x","B":"y","C":"z","D":"w"},"gold":"B","complexity":"multi_hop","evidence_offset":12}"#;
        let q: McqInstance = serde_json::from_str(raw).unwrap();
        assert_eq!(q.gold, Letter::B);
        assert_eq!(q.complexity, Complexity::MultiHop);
        assert!(q.render_question().ends_with("D. w"));
        assert!(serde_json::from_str::<McqInstance>(&raw.replace("\"B\",\"c", "\"E\",\"c")).is_err());
    }

    #[test]
    fn needle_validation() {
        let mut n = NeedleSpec {
            id: "n".into(),
            needle_text: "Yuki lives next to the Semper Opera House.".into(),
            question: "Which character has been to Dresden?".into(),
            gold_answers: vec!["Yuki".into()],
            keywords: vec![],
        };
        assert!(n.validate().is_ok());
        n.gold_answers.clear();
        assert_eq!(n.validate(), Err(DatasetError::NoGold("n".into())));
    }
}
