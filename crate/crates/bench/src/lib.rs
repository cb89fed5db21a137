//! Shared inputs for the benchmarks in `benches/`.

use tagforge_core::bench::synth;
use tagforge_core::taggers::{GazetteerTagger, Lexicon, Matching, TaggerConfig, TaggerKind};
use tagforge_core::{CategorySet, Document, TagCategory};

/// Synthetic corpus: `docs` documents of about `sentences` sentences.
pub fn corpus(docs: usize, sentences: usize) -> Vec<Document> {
    synth::corpus(docs, sentences)
}

pub fn categories() -> CategorySet {
    CategorySet::new(vec![
        TagCategory::new("Landmark", "A named building, monument or other visitable place."),
        TagCategory::new("City", "A city or town."),
    ])
    .expect("valid names")
}

/// Landmarks and cities of the synthetic needles.
pub fn lexicon() -> Lexicon {
    let mut lex = Lexicon::new(Matching::CaseSensitive);
    for n in synth::needles(16) {
        lex = lex
            .with("Landmark", [n.keywords[0].clone()])
            .with("City", [n.keywords[1].clone()]);
    }
    for v in lex.entries.values_mut() {
        v.sort();
        v.dedup();
    }
    lex
}

pub fn gazetteer() -> GazetteerTagger {
    GazetteerTagger::new(TaggerConfig::new(TaggerKind::Gazetteer, categories()), &lexicon())
        .expect("lexicon fits categories")
}
