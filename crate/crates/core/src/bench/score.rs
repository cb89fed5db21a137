//! Response scoring.

use super::dataset::Letter;

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// 1 if any gold answer occurs in the response, ignoring case and
/// whitespace runs.
pub fn score_contains(response: &str, gold_answers: &[String]) -> u8 {
    let r = squash(response);
    gold_answers
        .iter()
        .map(|g| squash(g))
        .any(|g| !g.is_empty() && r.contains(&g))
        .into()
}

/// First standalone A-D in the response, e.g. "B", "Answer: (C)", "D.".
pub fn extract_letter(response: &str) -> Option<Letter> {
    response
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() == 1)
        .find_map(|w| Letter::from_char(w.chars().next()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McqScore {
    pub score: u8,
    /// No letter could be extracted.
    pub unparseable: bool,
}

pub fn score_mcq(response: &str, gold: Letter) -> McqScore {
    match extract_letter(response) {
        Some(l) => McqScore {
            score: u8::from(l == gold),
            unparseable: false,
        },
        None => McqScore {
            score: 0,
            unparseable: true,
        },
    }
}
