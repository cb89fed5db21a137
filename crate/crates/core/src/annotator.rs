//! Inline XML-style markup.
//!
//! Tags are textual markers, not strict XML: document content is never
//! escaped. Fidelity is defined instead by [`strip_tags`] being an exact
//! inverse of rendering, so the text a model sees between the tags is the
//! original text byte for byte.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{check_category_name, InvalidCategoryName, TagSpan, TaggedChunk};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NestingOrder {
    /// Containing spans enclose contained ones; equal ranges keep the order
    /// the tagger emitted them in.
    #[default]
    LongerSpanOuter,
    /// As above, but equal ranges nest alphabetically (outermost first).
    CategoryAlphabetical,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelOrder {
    /// Outermost label first, alphabetical.
    #[default]
    Alphabetical,
    /// Listed names first in the given order, then any others alphabetically.
    Explicit(Vec<String>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionPolicy {
    /// Discard the later-starting span of a partially overlapping pair.
    #[default]
    DropInner,
    /// Cut the later-starting span back to the end of the span it overlaps.
    TruncateInner,
}

/// Which tags of a [`TaggedChunk`] are rendered.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkupLevel {
    /// Wrap whole chunks; span categories are lifted into chunk labels.
    Chunk,
    /// Entity spans only.
    Entity,
    /// Chunk labels around entity spans.
    #[default]
    Both,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkupPolicy {
    #[serde(default)]
    pub nesting_order: NestingOrder,
    #[serde(default)]
    pub chunk_label_order: LabelOrder,
    #[serde(default)]
    pub collision_policy: CollisionPolicy,
    #[serde(default)]
    pub level: MarkupLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MarkupError {
    #[error(transparent)]
    InvalidCategoryName(#[from] InvalidCategoryName),
    #[error("span {category}({start},{end}) is empty, out of bounds or not on a char boundary")]
    InvalidSpan { category: String, start: usize, end: usize },
}

fn open_tag(out: &mut String, name: &str) {
    out.push('<');
    out.push_str(name);
    out.push('>');
}

fn close_tag(out: &mut String, name: &str) {
    out.push_str("</");
    out.push_str(name);
    out.push('>');
}

/// Bytes added by one open/close pair for `name`.
pub fn tag_pair_len(name: &str) -> usize {
    2 * name.len() + 5
}

fn ordered_labels<'a>(labels: &'a BTreeSet<String>, order: &LabelOrder) -> Vec<&'a str> {
    match order {
        LabelOrder::Alphabetical => labels.iter().map(String::as_str).collect(),
        LabelOrder::Explicit(list) => {
            let mut out: Vec<&str> = list.iter().filter_map(|n| labels.get(n).map(String::as_str)).collect();
            let mut seen: BTreeSet<&str> = BTreeSet::new();
            out.retain(|n| seen.insert(n));
            out.extend(labels.iter().map(String::as_str).filter(|n| !seen.contains(n)));
            out
        }
    }
}

/// Wrap the whole text in one tag pair per label.
pub fn render_chunk_markup(
    text: &str,
    labels: &BTreeSet<String>,
    policy: &MarkupPolicy,
) -> Result<String, MarkupError> {
    if labels.is_empty() {
        return Ok(text.to_string());
    }
    for l in labels {
        check_category_name(l)?;
    }
    let order = ordered_labels(labels, &policy.chunk_label_order);
    let extra: usize = order.iter().map(|n| tag_pair_len(n)).sum();
    let mut out = String::with_capacity(text.len() + extra);
    for name in &order {
        open_tag(&mut out, name);
    }
    out.push_str(text);
    for name in order.iter().rev() {
        close_tag(&mut out, name);
    }
    Ok(out)
}

/// Validate, order and de-collide spans into a disjoint-or-nested list sorted
/// by (start asc, end desc), equal ranges ordered per `policy.nesting_order`.
pub fn resolve_spans(text: &str, spans: &[TagSpan], policy: &MarkupPolicy) -> Result<Vec<TagSpan>, MarkupError> {
    for s in spans {
        check_category_name(&s.category)?;
        if !s.is_valid_for(text) {
            return Err(MarkupError::InvalidSpan {
                category: s.category.clone(),
                start: s.start,
                end: s.end,
            });
        }
    }

    let tie = |a: &(usize, TagSpan), b: &(usize, TagSpan)| match policy.nesting_order {
        NestingOrder::LongerSpanOuter => a.0.cmp(&b.0),
        NestingOrder::CategoryAlphabetical => a.1.category.cmp(&b.1.category).then(a.0.cmp(&b.0)),
    };
    let cmp = |a: &(usize, TagSpan), b: &(usize, TagSpan)| {
        a.1.start
            .cmp(&b.1.start)
            .then(b.1.end.cmp(&a.1.end))
            .then_with(|| tie(a, b))
    };

    let mut ordered: Vec<(usize, TagSpan)> = spans.iter().cloned().enumerate().collect();
    ordered.sort_by(cmp);
    ordered.dedup_by(|b, a| a.1 == b.1);

    let mut kept: Vec<(usize, TagSpan)> = Vec::with_capacity(ordered.len());
    // ends of currently open spans, innermost last
    let mut open: Vec<usize> = Vec::new();
    for (idx, mut span) in ordered {
        while open.last().is_some_and(|&end| end <= span.start) {
            open.pop();
        }
        if let Some(&enclosing_end) = open.last() {
            if span.end > enclosing_end {
                match policy.collision_policy {
                    CollisionPolicy::DropInner => continue,
                    CollisionPolicy::TruncateInner => span.end = enclosing_end,
                }
            }
        }
        open.push(span.end);
        kept.push((idx, span));
    }
    // truncation can create new equal ranges; restore the tie order
    kept.sort_by(cmp);
    kept.dedup_by(|b, a| a.1 == b.1);
    Ok(kept.into_iter().map(|(_, s)| s).collect())
}

/// Insert entity tags at span boundaries.
pub fn render_span_markup(text: &str, spans: &[TagSpan], policy: &MarkupPolicy) -> Result<String, MarkupError> {
    let resolved = resolve_spans(text, spans, policy)?;
    Ok(render_resolved(text, &resolved))
}

fn render_resolved(text: &str, resolved: &[TagSpan]) -> String {
    let extra: usize = resolved.iter().map(|s| tag_pair_len(&s.category)).sum();
    let mut out = String::with_capacity(text.len() + extra);
    let mut pos = 0;
    let mut stack: Vec<&TagSpan> = Vec::new();
    for span in resolved {
        while let Some(top) = stack.last().filter(|t| t.end <= span.start) {
            out.push_str(&text[pos..top.end]);
            close_tag(&mut out, &top.category);
            pos = top.end;
            stack.pop();
        }
        out.push_str(&text[pos..span.start]);
        open_tag(&mut out, &span.category);
        pos = span.start;
        stack.push(span);
    }
    while let Some(top) = stack.pop() {
        out.push_str(&text[pos..top.end]);
        close_tag(&mut out, &top.category);
        pos = top.end;
    }
    out.push_str(&text[pos..]);
    out
}

/// Render a tagged chunk at the level set in `policy`.
pub fn render_tagged(tagged: &TaggedChunk, policy: &MarkupPolicy) -> Result<String, MarkupError> {
    render_tagged_text(&tagged.chunk.text, tagged, policy)
}

/// Render `tagged`'s markup over `text`. Spans are only applied when `text` is
/// byte-identical to the tagged chunk's text; otherwise only chunk labels are.
pub fn render_tagged_text(text: &str, tagged: &TaggedChunk, policy: &MarkupPolicy) -> Result<String, MarkupError> {
    let same_text = text == tagged.chunk.text;
    match policy.level {
        MarkupLevel::Chunk => render_chunk_markup(text, &tagged.categories(), policy),
        MarkupLevel::Entity if same_text => render_span_markup(text, &tagged.spans, policy),
        MarkupLevel::Entity => Ok(text.to_string()),
        MarkupLevel::Both => {
            let inner = if same_text {
                render_span_markup(text, &tagged.spans, policy)?
            } else {
                text.to_string()
            };
            render_chunk_markup(&inner, &tagged.chunk_labels, policy)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct TagToken<'a> {
    pub name: &'a str,
    pub closing: bool,
    pub len: usize,
}

/// Recognise `<name>` or `</name>` at byte `i` for a known category name.
pub(crate) fn token_at<'a>(s: &'a str, i: usize, names: &BTreeSet<String>) -> Option<TagToken<'a>> {
    let bytes = s.as_bytes();
    if bytes.get(i) != Some(&b'<') {
        return None;
    }
    let mut j = i + 1;
    let closing = bytes.get(j) == Some(&b'/');
    if closing {
        j += 1;
    }
    let name_start = j;
    while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
        j += 1;
    }
    if j == name_start || bytes.get(j) != Some(&b'>') {
        return None;
    }
    let name = &s[name_start..j];
    names.contains(name).then_some(TagToken {
        name,
        closing,
        len: j + 1 - i,
    })
}

fn strip_once(marked: &str, names: &BTreeSet<String>) -> (String, usize) {
    let mut out = String::with_capacity(marked.len());
    let mut removed = 0;
    let mut pos = 0;
    let mut i = 0;
    let bytes = marked.as_bytes();
    while i < bytes.len() {
        if bytes[i] == b'<' {
            if let Some(tok) = token_at(marked, i, names) {
                out.push_str(&marked[pos..i]);
                i += tok.len;
                pos = i;
                removed += 1;
                continue;
            }
        }
        i += 1;
    }
    out.push_str(&marked[pos..]);
    (out, removed)
}

/// Remove `<name>` / `</name>` tokens for the given category names. Any other
/// text, including stray angle brackets, is kept. Stripping repeats until no
/// token remains, so the result is a fixed point.
pub fn strip_tags(marked: &str, names: &BTreeSet<String>) -> String {
    let (mut out, mut removed) = strip_once(marked, names);
    while removed > 0 {
        (out, removed) = strip_once(&out, names);
    }
    out
}

/// Whether `s` contains anything shaped like `<name>` or `</name>`, for any
/// valid category name.
pub fn looks_like_tag_token(s: &str) -> bool {
    let bytes = s.as_bytes();
    bytes.iter().enumerate().any(|(i, &b)| {
        if b != b'<' {
            return false;
        }
        let mut j = i + 1;
        if bytes.get(j) == Some(&b'/') {
            j += 1;
        }
        if !bytes.get(j).is_some_and(u8::is_ascii_alphabetic) {
            return false;
        }
        while bytes.get(j).is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_') {
            j += 1;
        }
        bytes.get(j) == Some(&b'>')
    })
}

/// Whether `marked` contains any known tag token.
pub fn contains_tag_token(marked: &str, names: &BTreeSet<String>) -> bool {
    marked
        .bytes()
        .enumerate()
        .any(|(i, b)| b == b'<' && token_at(marked, i, names).is_some())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LiftError {
    #[error("closing tag </{found}> at byte {at} does not match open tag {expected:?}")]
    Mismatched {
        at: usize,
        expected: Option<String>,
        found: String,
    },
    #[error("{0} tag(s) left open at end of input")]
    Unclosed(usize),
}

/// Parse known tag tokens out of `marked`, returning the text with tags removed
/// and the spans they delimited (offsets into that text). Fails on unbalanced
/// or crossing tags. Empty tag pairs produce no span.
pub fn lift_spans(marked: &str, names: &BTreeSet<String>) -> Result<(String, Vec<TagSpan>), LiftError> {
    let mut out = String::with_capacity(marked.len());
    let mut spans = Vec::new();
    let mut stack: Vec<(&str, usize)> = Vec::new();
    let bytes = marked.as_bytes();
    let mut pos = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            if let Some(tok) = token_at(marked, i, names) {
                out.push_str(&marked[pos..i]);
                if tok.closing {
                    match stack.pop() {
                        Some((name, start)) if name == tok.name => {
                            if out.len() > start {
                                spans.push(TagSpan::new(name, start, out.len()));
                            }
                        }
                        other => {
                            return Err(LiftError::Mismatched {
                                at: i,
                                expected: other.map(|(n, _)| n.to_string()),
                                found: tok.name.to_string(),
                            })
                        }
                    }
                } else {
                    stack.push((tok.name, out.len()));
                }
                i += tok.len;
                pos = i;
                continue;
            }
        }
        i += 1;
    }
    if !stack.is_empty() {
        return Err(LiftError::Unclosed(stack.len()));
    }
    out.push_str(&marked[pos..]);
    crate::model::sort_spans(&mut spans);
    Ok((out, spans))
}

/// Balanced and properly nested for the given category names.
pub fn is_well_formed(marked: &str, names: &BTreeSet<String>) -> bool {
    lift_spans(marked, names).is_ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub ok: bool,
    /// Earliest byte offset where the stripped text departs from the original.
    pub first_divergence: Option<usize>,
    pub balanced: bool,
}

pub fn verify_fidelity(original: &str, marked: &str, names: &BTreeSet<String>) -> FidelityReport {
    let stripped = strip_tags(marked, names);
    let first_divergence = first_difference(original.as_bytes(), stripped.as_bytes());
    let balanced = is_well_formed(marked, names);
    FidelityReport {
        ok: first_divergence.is_none() && balanced,
        first_divergence,
        balanced,
    }
}

fn first_difference(a: &[u8], b: &[u8]) -> Option<usize> {
    match a.iter().zip(b).position(|(x, y)| x != y) {
        Some(i) => Some(i),
        None if a.len() != b.len() => Some(a.len().min(b.len())),
        None => None,
    }
}
