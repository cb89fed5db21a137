//! Deterministic dictionary tagger: longest-match, left-to-right, on word
//! boundaries.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Tagger, TaggerConfig, TaggerError, TaggerStats};
use crate::annotator::looks_like_tag_token;
use crate::model::{canonical_hash, CategorySet, Chunk, Digest, TagSpan, TaggedChunk};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matching {
    CaseSensitive,
    #[default]
    CaseInsensitive,
}

/// Category to surface phrases. The on-disk format is a JSON object
/// `{"Category": ["phrase", ...]}`; matching mode is set separately.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub entries: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub matching: Matching,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LexiconError {
    #[error("category {0:?} is not in the category set")]
    UnknownCategory(String),
    #[error("phrase {phrase:?} for {category} is empty or has surrounding whitespace")]
    BadPhrase { category: String, phrase: String },
    #[error("phrase {phrase:?} for {category} contains tag syntax")]
    TagSyntax { category: String, phrase: String },
}

impl Lexicon {
    pub fn new(matching: Matching) -> Self {
        Self {
            entries: BTreeMap::new(),
            matching,
        }
    }

    pub fn with<I, S>(mut self, category: &str, phrases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.entries
            .entry(category.to_string())
            .or_default()
            .extend(phrases.into_iter().map(Into::into));
        self
    }

    pub fn load(path: &Path, matching: Matching) -> Result<Self, TaggerError> {
        let raw = std::fs::read_to_string(path).map_err(|e| TaggerError::Io(format!("{}: {e}", path.display())))?;
        let entries: BTreeMap<String, Vec<String>> =
            serde_json::from_str(&raw).map_err(|e| TaggerError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self { entries, matching })
    }

    pub fn validate(&self, categories: &CategorySet) -> Result<(), LexiconError> {
        for (cat, phrases) in &self.entries {
            if !categories.contains(cat) {
                return Err(LexiconError::UnknownCategory(cat.clone()));
            }
            for p in phrases {
                let bad = || LexiconError::BadPhrase {
                    category: cat.clone(),
                    phrase: p.clone(),
                };
                if p.is_empty() || p.trim() != p {
                    return Err(bad());
                }
                if looks_like_tag_token(p) {
                    return Err(LexiconError::TagSyntax {
                        category: cat.clone(),
                        phrase: p.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn digest(&self) -> Digest {
        canonical_hash(self).expect("lexicon serializes")
    }
}

#[derive(Debug, Default)]
struct Node {
    children: HashMap<char, usize>,
    /// Smallest category name among phrases ending here.
    category: Option<String>,
}

/// Character trie over (optionally case-folded) phrases.
#[derive(Debug)]
struct Trie {
    nodes: Vec<Node>,
    fold: bool,
}

impl Trie {
    fn build(lex: &Lexicon) -> Self {
        let mut trie = Trie {
            nodes: vec![Node::default()],
            fold: lex.matching == Matching::CaseInsensitive,
        };
        for (cat, phrases) in &lex.entries {
            for p in phrases {
                let mut node = 0;
                for c in p.chars() {
                    for f in trie.folded(c) {
                        node = trie.child_or_insert(node, f);
                    }
                }
                let slot = &mut trie.nodes[node].category;
                match slot {
                    Some(existing) if existing.as_str() <= cat.as_str() => {}
                    _ => *slot = Some(cat.clone()),
                }
            }
        }
        trie
    }

    fn folded(&self, c: char) -> impl Iterator<Item = char> {
        let lower = if self.fold { Some(c.to_lowercase()) } else { None };
        let plain = if self.fold { None } else { Some(c) };
        lower.into_iter().flatten().chain(plain)
    }

    fn child_or_insert(&mut self, node: usize, c: char) -> usize {
        if let Some(&next) = self.nodes[node].children.get(&c) {
            return next;
        }
        self.nodes.push(Node::default());
        let id = self.nodes.len() - 1;
        self.nodes[node].children.insert(c, id);
        id
    }
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Longest-match scan of `text`.
fn scan(trie: &Trie, text: &str) -> Vec<TagSpan> {
    let mut spans = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (start, first) = chars[i];
        let prev_is_word = i > 0 && is_word(chars[i - 1].1);
        let mut best: Option<(usize, &str)> = None;
        if !(prev_is_word && is_word(first)) {
            let mut node = 0;
            let mut j = i;
            'walk: while j < chars.len() {
                for f in trie.folded(chars[j].1) {
                    match trie.nodes[node].children.get(&f) {
                        Some(&n) => node = n,
                        None => break 'walk,
                    }
                }
                j += 1;
                if let Some(cat) = &trie.nodes[node].category {
                    let last = chars[j - 1].1;
                    let next_is_word = chars.get(j).is_some_and(|&(_, c)| is_word(c));
                    if !(next_is_word && is_word(last)) {
                        best = Some((j, cat.as_str()));
                    }
                }
            }
        }
        match best {
            Some((j, cat)) => {
                let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
                spans.push(TagSpan::new(cat, start, end));
                i = j;
            }
            None => i += 1,
        }
    }
    spans
}

/// Tag one chunk's text against a lexicon.
pub fn tag_gazetteer(text: &str, lex: &Lexicon) -> Vec<TagSpan> {
    scan(&Trie::build(lex), text)
}

pub struct GazetteerTagger {
    config: TaggerConfig,
    trie: Trie,
}

impl GazetteerTagger {
    pub fn new(config: TaggerConfig, lexicon: &Lexicon) -> Result<Self, TaggerError> {
        lexicon.validate(&config.categories)?;
        Ok(Self {
            trie: Trie::build(lexicon),
            config,
        })
    }
}

impl Tagger for GazetteerTagger {
    fn config(&self) -> &TaggerConfig {
        &self.config
    }

    fn tag(&self, chunk: &Chunk, stats: &TaggerStats) -> Result<TaggedChunk, TaggerError> {
        stats.record_invocation();
        let mut out = TaggedChunk::untagged(chunk.clone(), self.provenance());
        out.spans = scan(&self.trie, &chunk.text);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn find(hay: &str, needle: &str) -> (usize, usize) {
        let s = hay.find(needle).unwrap();
        (s, s + needle.len())
    }

    #[test]
    fn needle_sentence() {
        let t = "Yuki lives next to the Semper Opera House.";
        let lex = Lexicon::new(Matching::CaseSensitive)
            .with("Person", ["Yuki"])
            .with("FAC", ["Semper Opera House"]);
        let (fs, fe) = find(t, "Semper Opera House");
        assert_eq!(
            tag_gazetteer(t, &lex),
            vec![TagSpan::new("Person", 0, 4), TagSpan::new("FAC", fs, fe)]
        );
    }

    #[test]
    fn no_hits() {
        let lex = Lexicon::new(Matching::CaseSensitive).with("Person", ["Yuki"]);
        assert!(tag_gazetteer("nothing to see", &lex).is_empty());
    }

    #[test]
    fn repeated_phrase() {
        let lex = Lexicon::new(Matching::CaseSensitive).with("GPE", ["New York"]);
        assert_eq!(
            tag_gazetteer("New York New York", &lex),
            vec![TagSpan::new("GPE", 0, 8), TagSpan::new("GPE", 9, 17)]
        );
    }

    #[test]
    fn longest_match_wins() {
        let lex = Lexicon::new(Matching::CaseSensitive)
            .with("GPE", ["New York"])
            .with("ORG", ["New York Times"]);
        assert_eq!(
            tag_gazetteer("the New York Times", &lex),
            vec![TagSpan::new("ORG", 4, 18)]
        );
        assert_eq!(tag_gazetteer("New York Tim", &lex), vec![TagSpan::new("GPE", 0, 8)]);
    }

    #[test]
    fn ties_break_by_category_name() {
        let lex = Lexicon::new(Matching::CaseSensitive)
            .with("Zeta", ["Paris"])
            .with("Alpha", ["Paris"]);
        assert_eq!(tag_gazetteer("Paris", &lex), vec![TagSpan::new("Alpha", 0, 5)]);
    }

    #[test]
    fn word_boundaries() {
        let lex = Lexicon::new(Matching::CaseSensitive).with("Person", ["Ann"]);
        assert!(tag_gazetteer("Annabel and Joanna", &lex).is_empty());
        assert_eq!(
            tag_gazetteer("(Ann), Ann's", &lex),
            vec![TagSpan::new("Person", 1, 4), TagSpan::new("Person", 7, 10)]
        );
    }

    #[test]
    fn case_insensitive_multibyte() {
        let lex = Lexicon::new(Matching::CaseInsensitive).with("GPE", ["zürich"]);
        let t = "Visit ZÜRICH today";
        let (s, e) = find(t, "ZÜRICH");
        assert_eq!(tag_gazetteer(t, &lex), vec![TagSpan::new("GPE", s, e)]);
        let strict = Lexicon::new(Matching::CaseSensitive).with("GPE", ["zürich"]);
        assert!(tag_gazetteer(t, &strict).is_empty());
    }

    #[test]
    fn validation() {
        let cats = CategorySet::new(vec![crate::model::TagCategory::new("Person", "")]).unwrap();
        let ok = Lexicon::new(Matching::CaseSensitive).with("Person", ["Yuki"]);
        assert!(ok.validate(&cats).is_ok());
        let unknown = Lexicon::new(Matching::CaseSensitive).with("Hero", ["Yuki"]);
        assert!(matches!(unknown.validate(&cats), Err(LexiconError::UnknownCategory(_))));
        let padded = Lexicon::new(Matching::CaseSensitive).with("Person", [" Yuki"]);
        assert!(matches!(padded.validate(&cats), Err(LexiconError::BadPhrase { .. })));
        let tagged = Lexicon::new(Matching::CaseSensitive).with("Person", ["<b>Yuki</b>"]);
        assert!(matches!(tagged.validate(&cats), Err(LexiconError::TagSyntax { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn spans_valid_and_disjoint(text in "[a-cé ,.]{0,80}", phrases in proptest::collection::vec("[a-cé]{1,3}( [a-c]{1,2})?", 1..6)) {
                let lex = Lexicon::new(Matching::CaseInsensitive).with("X", phrases.clone()).with("Y", phrases.iter().take(2).cloned());
                let spans = tag_gazetteer(&text, &lex);
                let mut last = 0;
                for s in &spans {
                    prop_assert!(s.is_valid_for(&text));
                    prop_assert!(s.start >= last);
                    last = s.end;
                }
                prop_assert_eq!(tag_gazetteer(&text, &lex), spans);
            }
        }
    }
}
