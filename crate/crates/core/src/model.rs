//! Shared domain types, text normalization and content hashing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use unicode_normalization::UnicodeNormalization;

/// Name of the content hash used for every digest in this crate. Recorded in
/// cache entries and run manifests.
pub const HASH_ALGORITHM: &str = "sha256";

/// A 256-bit content digest, rendered as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest([u8; 32]);

impl Digest {
    pub fn of_bytes(bytes: &[u8]) -> Self {
        Self(Sha256::digest(bytes).into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid digest: {0}")]
pub struct DigestParseError(String);

impl FromStr for Digest {
    type Err = DigestParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|_| DigestParseError(s.to_string()))?;
        Ok(Self(out))
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Unicode NFC, CR/LF folded to LF, outer whitespace trimmed. Internal
/// whitespace runs are kept as-is.
pub fn normalize(text: &str) -> String {
    let lf = text.replace("\r\n", "\n").replace('\r', "\n");
    lf.nfc().collect::<String>().trim().to_string()
}

/// SHA-256 of the normalized text.
pub fn content_hash(text: &str) -> Digest {
    Digest::of_bytes(normalize(text).as_bytes())
}

/// Serialize a value as JSON with object keys sorted. Used wherever a value is
/// hashed so that field order never leaks into an identity.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    // serde_json's Map is BTreeMap-backed without the preserve_order feature.
    let v = serde_json::to_value(value)?;
    serde_json::to_string(&v)
}

pub fn canonical_hash<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Digest> {
    canonical_json(value).map(|s| Digest::of_bytes(s.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            meta: BTreeMap::new(),
        }
    }
}

/// A contiguous slice of a document. `start..end` are byte offsets into the
/// owning document's text and always fall on character boundaries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub hash: Digest,
    /// Set when a single sentence (or word, for token windows) exceeded the
    /// configured chunk size and was emitted whole.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub oversized: bool,
}

impl Chunk {
    pub fn from_document(doc: &Document, index: usize, start: usize, end: usize) -> Self {
        let text = doc.text[start..end].to_string();
        Self {
            doc_id: doc.id.clone(),
            index,
            start,
            end,
            hash: content_hash(&text),
            text,
            oversized: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid category name {0:?}: must match [A-Za-z][A-Za-z0-9_]*")]
pub struct InvalidCategoryName(pub String);

/// Whether `name` can be used as an XML-style element name in markup.
pub fn is_valid_category_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn check_category_name(name: &str) -> Result<(), InvalidCategoryName> {
    if is_valid_category_name(name) {
        Ok(())
    } else {
        Err(InvalidCategoryName(name.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagCategory {
    pub name: String,
    #[serde(default)]
    pub definition: String,
    #[serde(default)]
    pub examples: Vec<String>,
}

impl TagCategory {
    pub fn new(name: impl Into<String>, definition: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            definition: definition.into(),
            examples: Vec::new(),
        }
    }

    pub fn with_examples<I, S>(mut self, examples: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.examples = examples.into_iter().map(Into::into).collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CategorySetError {
    #[error(transparent)]
    InvalidName(#[from] InvalidCategoryName),
    #[error("duplicate category name {0:?}")]
    Duplicate(String),
    #[error("category set is empty")]
    Empty,
}

/// An ordered set of categories with unique, markup-safe names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TagCategory>", into = "Vec<TagCategory>")]
pub struct CategorySet {
    categories: Vec<TagCategory>,
}

impl CategorySet {
    pub fn new(categories: Vec<TagCategory>) -> Result<Self, CategorySetError> {
        if categories.is_empty() {
            return Err(CategorySetError::Empty);
        }
        let mut seen = BTreeSet::new();
        for c in &categories {
            check_category_name(&c.name)?;
            if !seen.insert(c.name.as_str()) {
                return Err(CategorySetError::Duplicate(c.name.clone()));
            }
        }
        Ok(Self { categories })
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TagCategory> {
        self.categories.iter()
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.categories.iter().any(|c| c.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&TagCategory> {
        self.categories.iter().find(|c| c.name == name)
    }

    pub fn names(&self) -> BTreeSet<String> {
        self.categories.iter().map(|c| c.name.clone()).collect()
    }

    pub fn as_slice(&self) -> &[TagCategory] {
        &self.categories
    }

    pub fn digest(&self) -> Digest {
        canonical_hash(&self.categories).expect("categories serialize")
    }
}

impl TryFrom<Vec<TagCategory>> for CategorySet {
    type Error = CategorySetError;

    fn try_from(value: Vec<TagCategory>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<CategorySet> for Vec<TagCategory> {
    fn from(value: CategorySet) -> Self {
        value.categories
    }
}

impl<'a> IntoIterator for &'a CategorySet {
    type Item = &'a TagCategory;
    type IntoIter = std::slice::Iter<'a, TagCategory>;

    fn into_iter(self) -> Self::IntoIter {
        self.categories.iter()
    }
}

/// An entity-level tag over `start..end` (byte offsets into the chunk text).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TagSpan {
    pub category: String,
    pub start: usize,
    pub end: usize,
}

impl TagSpan {
    pub fn new(category: impl Into<String>, start: usize, end: usize) -> Self {
        Self {
            category: category.into(),
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Non-empty, in bounds, and on character boundaries of `text`.
    pub fn is_valid_for(&self, text: &str) -> bool {
        self.start < self.end
            && self.end <= text.len()
            && text.is_char_boundary(self.start)
            && text.is_char_boundary(self.end)
    }

    pub fn contains(&self, other: &TagSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tagger: String,
    pub config_hash: Digest,
    /// Sub-tagger provenance for merged results.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parts: Vec<Provenance>,
}

impl Provenance {
    pub fn new(tagger: impl Into<String>, config_hash: Digest) -> Self {
        Self {
            tagger: tagger.into(),
            config_hash,
            parts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedChunk {
    pub chunk: Chunk,
    #[serde(default)]
    pub chunk_labels: BTreeSet<String>,
    #[serde(default)]
    pub spans: Vec<TagSpan>,
    pub provenance: Provenance,
    /// IE output that failed the fidelity check; spans were discarded.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fidelity_failed: bool,
}

impl TaggedChunk {
    pub fn untagged(chunk: Chunk, provenance: Provenance) -> Self {
        Self {
            chunk,
            chunk_labels: BTreeSet::new(),
            spans: Vec::new(),
            provenance,
            fidelity_failed: false,
        }
    }

    /// Categories used anywhere in this result.
    pub fn categories(&self) -> BTreeSet<String> {
        let mut out = self.chunk_labels.clone();
        out.extend(self.spans.iter().map(|s| s.category.clone()));
        out
    }

    pub fn is_empty(&self) -> bool {
        self.chunk_labels.is_empty() && self.spans.is_empty()
    }
}

/// Sort spans by (start asc, end desc), the order markup is emitted in.
pub fn sort_spans(spans: &mut [TagSpan]) {
    spans.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)));
}
