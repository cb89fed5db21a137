//! Rule-based sentence and paragraph boundaries.
//!
//! A sentence ends after a run of terminal punctuation (plus any closing
//! quotes or brackets) that is followed by whitespace or end of text, unless
//! the word before a single period is a known abbreviation or the next word
//! starts lowercase. Blank lines always end a sentence.

use std::ops::Range;

const TERMINALS: &[char] = &['.', '!', '?', '…'];
const CLOSERS: &[char] = &['"', '\'', '”', '’', ')', ']', '»', '}'];
const OPENERS: &[char] = &['"', '\'', '“', '‘', '(', '[', '«', '{'];

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "vs", "etc", "e.g", "i.e", "inc", "ltd", "co", "corp",
    "no", "fig", "vol", "cf", "al", "approx", "dept", "gen", "gov", "lt", "col", "sgt", "capt", "rev", "hon", "jan",
    "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec", "p", "pp", "ed", "eds", "ca",
];

fn is_abbreviation(word: &str) -> bool {
    let w = word.trim_start_matches(OPENERS).to_lowercase();
    ABBREVIATIONS.contains(&w.as_str())
}

/// Trim whitespace off both ends of `text[range]`, returning `None` when
/// nothing is left.
pub(crate) fn trim_range(text: &str, range: Range<usize>) -> Option<Range<usize>> {
    let slice = &text[range.clone()];
    let lead = slice.len() - slice.trim_start().len();
    let trail = slice.len() - slice.trim_end().len();
    let start = range.start + lead;
    let end = range.end - trail;
    (start < end).then_some(start..end)
}

/// Positions where a blank line (a newline, optional horizontal whitespace,
/// another newline) begins.
fn blank_line_breaks(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut last_newline: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c == '\n' {
            if let Some(prev) = last_newline {
                out.push(prev);
            }
            last_newline = Some(i);
        } else if !c.is_whitespace() {
            last_newline = None;
        }
    }
    out.dedup();
    out
}

/// Paragraph ranges: text between blank lines, trimmed.
pub fn paragraphs(text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for b in blank_line_breaks(text) {
        if b >= start {
            out.extend(trim_range(text, start..b));
            start = b;
        }
    }
    out.extend(trim_range(text, start..text.len()));
    out
}

/// Sentence ranges within `range` of `text`, trimmed, in order.
pub fn sentences_in(text: &str, range: Range<usize>) -> Vec<Range<usize>> {
    let mut cuts = Vec::new();
    let slice = &text[range.clone()];
    let chars: Vec<(usize, char)> = slice.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (at, c) = chars[i];
        if !TERMINALS.contains(&c) {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < chars.len() && TERMINALS.contains(&chars[i].1) {
            i += 1;
        }
        let single_period = i - run_start == 1 && c == '.';
        while i < chars.len() && CLOSERS.contains(&chars[i].1) {
            i += 1;
        }
        let end = chars.get(i).map_or(slice.len(), |&(p, _)| p);
        let followed_by_space = chars.get(i).is_none_or(|&(_, n)| n.is_whitespace());
        if !followed_by_space {
            continue;
        }
        if single_period {
            let word_start = slice[..at]
                .rfind(char::is_whitespace)
                .map_or(0, |p| p + slice[p..].chars().next().map_or(1, char::len_utf8));
            if is_abbreviation(&slice[word_start..at]) {
                continue;
            }
        }
        let next_word = slice[end..].trim_start().chars().next();
        if next_word.is_some_and(char::is_lowercase) {
            continue;
        }
        cuts.push(range.start + end);
    }
    for b in blank_line_breaks(slice) {
        cuts.push(range.start + b);
    }
    cuts.sort_unstable();
    cuts.dedup();

    let mut out = Vec::new();
    let mut start = range.start;
    for cut in cuts {
        out.extend(trim_range(text, start..cut));
        start = cut;
    }
    out.extend(trim_range(text, start..range.end));
    out
}

pub fn sentences(text: &str) -> Vec<Range<usize>> {
    sentences_in(text, 0..text.len())
}

/// Maximal runs of non-whitespace.
pub fn words(text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push(s..i);
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(s..text.len());
    }
    out
}
