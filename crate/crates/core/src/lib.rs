//! Tagging-augmented generation toolkit: chunking, semantic tagging, inline
//! markup, tag caching and long-context QA benchmarking.

pub mod annotator;
pub mod bench;
pub mod cache;
pub mod chunker;
pub mod gateway;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod taggers;
pub mod tokens;

pub use model::{
    canonical_hash, canonical_json, content_hash, normalize, CategorySet, Chunk, Digest, Document, Provenance,
    TagCategory, TagSpan, TaggedChunk,
};
