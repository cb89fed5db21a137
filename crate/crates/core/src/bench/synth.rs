//! Synthetic fixtures: filler corpus, needle-question pairs and a small
//! multiple-choice book set. Everything is derived from fixed word lists and
//! a seeded RNG, so fixtures are identical on every platform.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{Complexity, Letter, McqInstance, McqOptions, NeedleSpec};
use crate::model::Document;

const SUBJECTS: &[&str] = &[
    "the old ferryman",
    "a tired clerk",
    "the baker's daughter",
    "an elderly gardener",
    "the night watchman",
    "a young apprentice",
    "the village doctor",
    "a travelling tinker",
    "the schoolmistress",
    "a quiet shepherd",
    "the harbour pilot",
    "a retired sailor",
    "the café owner",
    "a curious child",
    "the mill foreman",
    "a wandering fiddler",
];
const VERBS: &[&str] = &[
    "mended",
    "carried",
    "painted",
    "counted",
    "polished",
    "studied",
    "wrapped",
    "sorted",
    "sketched",
    "repaired",
    "folded",
    "measured",
    "gathered",
    "cleaned",
    "weighed",
    "described",
];
const OBJECTS: &[&str] = &[
    "a basket of apples",
    "the broken lantern",
    "several wool blankets",
    "a stack of letters",
    "the copper kettle",
    "two wooden crates",
    "an unfinished map",
    "the blue umbrella",
    "a jar of honey",
    "the rusty bicycle",
    "some dried herbs",
    "a naïve drawing",
    "the façade plans",
    "an empty birdcage",
    "a pair of boots",
    "the ledger of accounts",
];
const ADJUNCTS: &[&str] = &[
    "before the rain started",
    "while the kettle boiled",
    "late in the afternoon",
    "without saying a word",
    "as the bells rang",
    "under the grey sky",
    "near the stone wall",
    "by the light of a candle",
    "after the market closed",
    "with great care",
    "in the narrow kitchen",
    "beside the frozen pond",
    "despite the noise outside",
    "long after supper",
    "on the creaking porch",
    "during the long winter",
];
const EXTRAS: &[&str] = &[
    "Nobody seemed to notice.",
    "It had been a long week.",
    "The wind kept changing direction.",
    "Somewhere a dog was barking.",
    "The street was almost empty.",
    "Nothing else happened that day.",
    "Everyone agreed it was odd.",
    "The clock in the hall struck four.",
];

/// `docs` documents of `sentences` filler sentences each, grouped into
/// paragraphs of five. A few sentences repeat on purpose so dedup has work
/// to do.
pub fn corpus(docs: usize, sentences: usize) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a6);
    (0..docs)
        .map(|d| {
            let mut text = String::new();
            for i in 0..sentences {
                let s = if rng.random_ratio(1, 8) {
                    EXTRAS.choose(&mut rng).unwrap().to_string()
                } else {
                    let mut s = format!(
                        "{} {} {} {}.",
                        SUBJECTS.choose(&mut rng).unwrap(),
                        VERBS.choose(&mut rng).unwrap(),
                        OBJECTS.choose(&mut rng).unwrap(),
                        ADJUNCTS.choose(&mut rng).unwrap()
                    );
                    s[..1].make_ascii_uppercase();
                    s
                };
                if i > 0 {
                    text.push_str(if i % 5 == 0 { "\n\n" } else { " " });
                }
                text.push_str(&s);
            }
            Document::new(format!("filler-{d:03}"), text)
        })
        .collect()
}

const NAMES: &[&str] = &[
    "Yuki",
    "Stuart",
    "Katie",
    "Veronica",
    "Gary",
    "Megan",
    "Calvin",
    "Mandy",
    "Diana",
    "Caleb",
    "Hiroshi",
    "Ingrid",
    "Tobias",
    "Leilani",
    "Rashid",
    "Sofia",
    "Emeka",
    "Astrid",
    "Mateo",
    "Priya",
    "Oskar",
    "Thandiwe",
    "Bruno",
    "Keiko",
    "Dmitri",
    "Amara",
    "Lars",
    "Noor",
    "Felix",
    "Zanele",
    "Ramón",
    "Elif",
    "Kwame",
    "Birgit",
    "Arjun",
    "Mireille",
    "Tomasz",
    "Aiko",
    "Jonas",
    "Farah",
    "Nikolai",
    "Esperanza",
    "Kenji",
    "Ottilie",
    "Dario",
    "Saoirse",
    "Bongani",
    "Linnea",
    "Hamza",
    "Chiara",
    "Evander",
    "Yara",
    "Ignatius",
    "Solveig",
    "Anselm",
    "Rosalind",
    "Teodor",
    "Wilhelmina",
];

const LANDMARKS: &[(&str, &str)] = &[
    ("the Semper Opera House", "Dresden"),
    ("the Kiasma museum", "Helsinki"),
    ("the Alfama steps", "Lisbon"),
    ("the Nyhavn canal", "Copenhagen"),
    ("the Pazo de Raxoi", "Santiago de Compostela"),
    ("the Wawel castle", "Kraków"),
    ("the Hallgrímskirkja", "Reykjavík"),
    ("the Mole Antonelliana", "Turin"),
    ("the Palau de la Música", "Barcelona"),
    ("the Atomium", "Brussels"),
    ("the Fushimi Inari shrine", "Kyoto"),
    ("the Bahá'í Gardens", "Haifa"),
    ("the Gellért Baths", "Budapest"),
    ("the Ponte Vecchio", "Florence"),
];

/// `n` needle-question pairs. The question names the city, the needle only
/// the landmark, so answering needs one associative hop.
pub fn needles(n: usize) -> Vec<NeedleSpec> {
    (0..n)
        .map(|i| {
            let name = NAMES[i % NAMES.len()];
            let name = if i < NAMES.len() {
                name.to_string()
            } else {
                format!("{name} {}", i / NAMES.len() + 1)
            };
            let (landmark, city) = LANDMARKS[i % LANDMARKS.len()];
            NeedleSpec {
                id: format!("n{i:02}"),
                needle_text: format!("Actually, {name} lives next to {landmark}."),
                question: format!("Which character has been to {city}?"),
                gold_answers: vec![name.clone()],
                keywords: vec![landmark.trim_start_matches("the ").to_string(), city.to_string()],
            }
        })
        .collect()
}

/// Small multiple-choice set: `books` books of `paragraphs` paragraphs, each
/// with one question per complexity anchored at a known paragraph.
pub fn mcq(books: usize, paragraphs: usize) -> (Vec<Document>, Vec<McqInstance>) {
    let filler = corpus(books, paragraphs * 5);
    let mut rng = ChaCha8Rng::seed_from_u64(0x9a);
    let mut docs = Vec::new();
    let mut questions = Vec::new();
    for (b, f) in filler.into_iter().enumerate() {
        let book_id = format!("book-{b:02}");
        let mut text = String::new();
        let mut qn = 0;
        for (p, para) in f.text.split("\n\n").enumerate() {
            if p > 0 {
                text.push_str("\n\n");
            }
            // one fact paragraph per complexity, spread through the book
            let fact_at = [paragraphs / 6, paragraphs / 2, paragraphs * 5 / 6];
            if let Some(ci) = fact_at.iter().position(|&q| q == p) {
                let name = NAMES[(b * 3 + ci) % NAMES.len()];
                let (landmark, city) = LANDMARKS[(b * 3 + ci) % LANDMARKS.len()];
                let offset = text.len();
                text.push_str(&format!("{name} once spent a winter in {city}, sketching {landmark}. "));
                let gold = Letter::ALL[rng.random_range(0..4)];
                let mut wrong = NAMES.iter().filter(|n| **n != name).copied().collect::<Vec<_>>();
                wrong.sort_by_key(|n| n.len() * 31 % 7 + (b + ci) % 5);
                let mut opts = [wrong[0], wrong[1], wrong[2], wrong[3]];
                opts[gold as usize] = name;
                questions.push(McqInstance {
                    id: format!("{book_id}-q{qn}"),
                    book_id: book_id.clone(),
                    question: format!("Who spent a winter in {city}?"),
                    options: McqOptions {
                        a: opts[0].into(),
                        b: opts[1].into(),
                        c: opts[2].into(),
                        d: opts[3].into(),
                    },
                    gold,
                    complexity: Complexity::ALL[ci],
                    evidence_offset: offset,
                });
                qn += 1;
            }
            text.push_str(para);
        }
        docs.push(Document::new(book_id, text));
    }
    (docs, questions)
}
