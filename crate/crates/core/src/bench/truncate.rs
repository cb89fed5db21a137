//! Fit long books into a context budget and drop questions whose evidence
//! was cut off.

use serde::{Deserialize, Serialize};

use super::dataset::McqInstance;
use crate::chunker::sentences;
use crate::model::Document;
use crate::tokens::TokenEstimator;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub book: Document,
    pub kept: Vec<McqInstance>,
    pub removed: usize,
    /// Byte length of the kept prefix; equals the original length when the
    /// book fit.
    pub cut: usize,
}

/// Cut `book` at the last sentence end whose prefix fits `budget` tokens.
/// Questions for this book whose `evidence_offset` is at or past the cut are
/// removed. Questions for other books are ignored.
pub fn truncate_and_filter(
    book: &Document,
    instances: &[McqInstance],
    budget: usize,
    est: &TokenEstimator,
) -> Truncation {
    assert!(budget > 0, "budget must be positive");
    let cut = if est.estimate(&book.text) <= budget {
        book.text.len()
    } else {
        let ends: Vec<usize> = sentences(&book.text).into_iter().map(|r| r.end).collect();
        // estimates are monotone in prefix length, so binary search the ends
        let fits = ends.partition_point(|&e| est.estimate(&book.text[..e]) <= budget);
        if fits == 0 {
            0
        } else {
            ends[fits - 1]
        }
    };
    let mine: Vec<&McqInstance> = instances.iter().filter(|q| q.book_id == book.id).collect();
    let kept: Vec<McqInstance> = mine
        .iter()
        .filter(|q| cut == book.text.len() || q.evidence_offset < cut)
        .map(|q| (*q).clone())
        .collect();
    let mut out = book.clone();
    out.text.truncate(cut);
    Truncation {
        removed: mine.len() - kept.len(),
        book: out,
        kept,
        cut,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::dataset::{Complexity, Letter, McqOptions};
    use crate::tokens::EstimatorMode;

    fn q(id: &str, offset: usize) -> McqInstance {
        McqInstance {
            id: id.into(),
            book_id: "b".into(),
            question: "?".into(),
            options: McqOptions {
                a: "a".into(),
                b: "b".into(),
                c: "c".into(),
                d: "d".into(),
            },
            gold: Letter::A,
            complexity: Complexity::Detail,
            evidence_offset: offset,
        }
    }

    const BOOK: &str = "First part is here. Second part is here. Third part is here.";

    #[test]
    fn fits_unchanged() {
        let est = TokenEstimator::new(EstimatorMode::CharsDiv4);
        let t = truncate_and_filter(&Document::new("b", BOOK), &[q("x", 50)], 1000, &est);
        assert_eq!(t.book.text, BOOK);
        assert_eq!((t.kept.len(), t.removed), (1, 0));
    }

    #[test]
    fn mid_book_cut_drops_only_late_evidence() {
        let est = TokenEstimator::new(EstimatorMode::CharsDiv4);
        // hand-placed offsets: one per sentence
        let offsets = [0, BOOK.find("Second").unwrap(), BOOK.find("Third").unwrap()];
        let qs: Vec<_> = offsets
            .iter()
            .enumerate()
            .map(|(i, &o)| q(&format!("q{i}"), o))
            .collect();
        // "First part is here. Second part is here." is 40 chars = 10 tokens
        let t = truncate_and_filter(&Document::new("b", BOOK), &qs, 11, &est);
        assert_eq!(t.book.text, "First part is here. Second part is here.");
        assert_eq!(t.removed, 1);
        assert_eq!(t.kept.iter().map(|q| q.id.as_str()).collect::<Vec<_>>(), ["q0", "q1"]);
    }

    #[test]
    fn other_books_ignored() {
        let est = TokenEstimator::new(EstimatorMode::CharsDiv4);
        let mut other = q("o", 0);
        other.book_id = "zzz".into();
        let t = truncate_and_filter(&Document::new("b", BOOK), &[other], 5, &est);
        assert_eq!((t.kept.len(), t.removed), (0, 0));
    }
}
