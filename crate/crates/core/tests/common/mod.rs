#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use tagforge_core::annotator::MarkupPolicy;
use tagforge_core::cache::TagCache;
use tagforge_core::chunker::{chunk_document, dedup, reassemble, ChunkStrategy, ChunkingConfig};
use tagforge_core::gateway::MockModel;
use tagforge_core::io::read_jsonl;
use tagforge_core::pipeline::{tag_chunks, PipelineOptions, RunCounts};
use tagforge_core::taggers::categories::ner18;
use tagforge_core::taggers::{GazetteerTagger, Lexicon, Matching, Tagger, TaggerConfig, TaggerKind};
use tagforge_core::{CategorySet, Chunk, Document, TagCategory};

pub const FIXTURE_MODEL: &str = "fixture-model";

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn corpus() -> Vec<Document> {
    read_jsonl(&fixtures().join("corpus.jsonl")).expect("fixture corpus")
}

pub fn categories() -> CategorySet {
    let raw = std::fs::read_to_string(fixtures().join("categories.json")).unwrap();
    let cats: Vec<TagCategory> = serde_json::from_str(&raw).unwrap();
    CategorySet::new(cats).unwrap()
}

pub fn chunking() -> ChunkingConfig {
    ChunkingConfig::new(ChunkStrategy::Sentence, 32)
}

pub fn corpus_chunks() -> Vec<Chunk> {
    corpus()
        .iter()
        .flat_map(|d| chunk_document(d, &chunking()).unwrap().chunks)
        .collect()
}

/// The 50 chunks behind the committed classification replay fixtures: the
/// fixture corpus's unique chunks, topped up from the synthetic corpus.
pub fn replay_chunks() -> Vec<Chunk> {
    let mut all = corpus_chunks();
    for d in tagforge_core::bench::synth::corpus(2, 40) {
        all.extend(chunk_document(&d, &chunking()).unwrap().chunks);
    }
    let (mut unique, _) = dedup(&all);
    unique.truncate(50);
    assert_eq!(unique.len(), 50);
    unique
}

/// Passage text out of a classification prompt.
pub fn passage(user: &str) -> &str {
    let start = user.rfind("Passage:\n").map(|i| i + "Passage:\n".len()).unwrap_or(0);
    let end = user[start..]
        .rfind("\nAnswer:")
        .map(|i| start + i)
        .unwrap_or(user.len());
    &user[start..end]
}

const RULES: &[(&str, &[&str])] = &[
    (
        "Character",
        &[
            "Yuki", "Ingrid", "Tobias", "Keiko", "Hiroshi", "Priya", "Novák", "Amara",
        ],
    ),
    (
        "City",
        &[
            "Dresden", "Prague", "Zürich", "Lisbon", "Kraków", "Helsinki", "Kyoto", "東京",
        ],
    ),
    (
        "Landmark",
        &[
            "Opera House",
            "Frauenkirche",
            "Charles Bridge",
            "shrine",
            "signal tower",
        ],
    ),
    (
        "Travel",
        &[
            "train",
            "walk",
            "walked",
            "walking",
            "bus",
            "Buses",
            "taxi",
            "station",
            "climbed",
            "Shinkansen",
        ],
    ),
    (
        "Weather",
        &[
            "Rain", "rain", "frozen", "cold", "colder", "skies", "ice", "wind", "winter",
        ],
    ),
];

/// Keyword labels for a passage, in category order. Multi-word keys match
/// as substrings, single words only as whole words.
pub fn keyword_labels(text: &str) -> Vec<String> {
    let words: Vec<&str> = text.split(|c: char| !c.is_alphanumeric()).collect();
    let hit = |k: &str| {
        if k.contains(' ') || !k.is_ascii() {
            text.contains(k)
        } else {
            words.contains(&k)
        }
    };
    RULES
        .iter()
        .filter(|(_, keys)| keys.iter().any(|k| hit(k)))
        .map(|(c, _)| c.to_string())
        .collect()
}

/// Scripted stand-in for a classification model.
pub fn scripted_classifier() -> MockModel {
    MockModel::from_fn(|req| {
        let labels = keyword_labels(passage(&req.user));
        Ok(if labels.is_empty() {
            "NONE".to_string()
        } else {
            serde_json::to_string(&labels).unwrap()
        })
    })
}

pub fn ner_lexicon() -> Lexicon {
    Lexicon::load(&fixtures().join("lexicon.json"), Matching::CaseSensitive).unwrap()
}

pub fn gazetteer() -> GazetteerTagger {
    GazetteerTagger::new(TaggerConfig::new(TaggerKind::Gazetteer, ner18()), &ner_lexicon()).unwrap()
}

pub struct PipelineOut {
    /// (document id, tagged text) in corpus order.
    pub docs: Vec<(String, String)>,
    pub total_chunks: usize,
    pub unique_chunks: usize,
    pub counts: RunCounts,
}

/// chunk, dedup across the corpus, tag, render, reassemble.
pub fn run_pipeline(tagger: &dyn Tagger, cache: Option<&TagCache>) -> PipelineOut {
    let corpus = corpus();
    let all = corpus_chunks();
    let (unique, occ) = dedup(&all);
    let run = tag_chunks(&unique, tagger, cache, PipelineOptions::default()).unwrap();
    let map: HashMap<_, _> = run.results.into_iter().map(|tc| (tc.chunk.hash, tc)).collect();
    let docs = corpus
        .iter()
        .map(|d| {
            (
                d.id.clone(),
                reassemble(d, &occ, &map, &MarkupPolicy::default()).unwrap(),
            )
        })
        .collect();
    PipelineOut {
        docs,
        total_chunks: all.len(),
        unique_chunks: unique.len(),
        counts: run.counts,
    }
}
