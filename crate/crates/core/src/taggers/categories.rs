//! Built-in category sets.

use crate::model::{CategorySet, TagCategory};

/// The 18 standard named-entity types of the OntoNotes scheme, named by their
/// usual NER labels so a bridge's output maps onto them by identity.
pub fn ner18() -> CategorySet {
    let c = |name: &str, def: &str, ex: &[&str]| TagCategory::new(name, def).with_examples(ex.iter().copied());
    CategorySet::new(vec![
        c(
            "PERSON",
            "People, including fictional characters.",
            &["Marie Curie", "Yuki"],
        ),
        c(
            "NORP",
            "Nationalities, religious or political groups.",
            &["French", "Buddhist"],
        ),
        c(
            "FAC",
            "Buildings, airports, highways, bridges and other facilities.",
            &["Semper Opera House", "Golden Gate Bridge"],
        ),
        c(
            "ORG",
            "Companies, agencies, institutions and other organizations.",
            &["UNESCO", "Acme Corp"],
        ),
        c(
            "GPE",
            "Geopolitical entities: countries, cities, states.",
            &["Dresden", "Japan"],
        ),
        c(
            "LOC",
            "Non-geopolitical locations such as mountain ranges and bodies of water.",
            &["the Alps", "Lake Geneva"],
        ),
        c(
            "PRODUCT",
            "Objects, vehicles, foods and other products (not services).",
            &["Model T", "iPhone"],
        ),
        c(
            "EVENT",
            "Named events such as storms, battles, wars and sports events.",
            &["World War II", "the Olympics"],
        ),
        c(
            "WORK_OF_ART",
            "Titles of books, songs, paintings and other works.",
            &["Pride and Prejudice", "Mona Lisa"],
        ),
        c(
            "LAW",
            "Named documents made into laws.",
            &["the Magna Carta", "Title IX"],
        ),
        c("LANGUAGE", "Any named language.", &["German", "Esperanto"]),
        c(
            "DATE",
            "Absolute or relative dates or periods.",
            &["June 1867", "last week"],
        ),
        c("TIME", "Times smaller than a day.", &["noon", "three hours"]),
        c(
            "PERCENT",
            "Percentages, including the percent sign.",
            &["17%", "ten percent"],
        ),
        c("MONEY", "Monetary values, including the unit.", &["$5", "twelve euros"]),
        c(
            "QUANTITY",
            "Measurements such as weight or distance.",
            &["3 km", "forty pounds"],
        ),
        c("ORDINAL", "Ordinal numbers.", &["first", "2nd"]),
        c(
            "CARDINAL",
            "Numerals that do not fall under another type.",
            &["three", "1,035"],
        ),
    ])
    .expect("built-in categories are valid")
}

/// The labels of [`ner18`], in order.
pub const NER18_LABELS: [&str; 18] = [
    "PERSON",
    "NORP",
    "FAC",
    "ORG",
    "GPE",
    "LOC",
    "PRODUCT",
    "EVENT",
    "WORK_OF_ART",
    "LAW",
    "LANGUAGE",
    "DATE",
    "TIME",
    "PERCENT",
    "MONEY",
    "QUANTITY",
    "ORDINAL",
    "CARDINAL",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ner18_is_complete() {
        let set = ner18();
        assert_eq!(set.len(), 18);
        for (cat, label) in set.iter().zip(NER18_LABELS) {
            assert_eq!(cat.name, label);
            assert!(!cat.definition.is_empty());
            assert!(!cat.examples.is_empty());
        }
    }
}
