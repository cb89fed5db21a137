//! Prompt templates.
//!
//! A template file is a list of sections, each opened by `[name]` on its own
//! line. `persona`, `instructions` and `format` hold plain prose; `system`
//! and `user` lay out the two messages using `{{slot}}` placeholders;
//! `example` (optional) formats one few-shot exemplar from `{{input}}` and
//! `{{output}}`. Lines starting with `#` before the first section are
//! comments.
//!
//! Rendering is a single left-to-right pass, so slot syntax inside chunk
//! text or category definitions is copied through untouched.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{content_hash, CategorySet, Digest};

const CLASSIFICATION: &str = include_str!("../../templates/classification.txt");
const IE: &str = include_str!("../../templates/ie.txt");

const PROSE: [&str; 3] = ["persona", "instructions", "format"];
const REQUIRED_SLOTS: [&str; 5] = ["persona", "instructions", "format", "categories", "chunk"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template has no {{{{{0}}}}} slot")]
    TemplateSlotMissing(String),
    #[error("template section [{0}] is missing")]
    SectionMissing(String),
    #[error("unknown template section [{0}]")]
    UnknownSection(String),
    #[error("unknown slot {{{{{0}}}}}")]
    UnknownSlot(String),
    #[error("text before the first section on line {0}")]
    Stray(usize),
    #[error("cannot read template: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    sections: BTreeMap<String, String>,
    source: String,
}

/// One exemplar. `output` is the answer exactly as the model should give it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShot {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub system: String,
    pub user: String,
}

impl PromptTemplate {
    pub fn parse(source: &str) -> Result<Self, TemplateError> {
        let mut sections: BTreeMap<String, String> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (i, line) in source.lines().enumerate() {
            let trimmed = line.trim_end();
            if let Some(name) = trimmed.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                if name.chars().all(|c| c.is_ascii_lowercase()) && !name.is_empty() {
                    if !matches!(
                        name,
                        "persona" | "instructions" | "format" | "system" | "user" | "example"
                    ) {
                        return Err(TemplateError::UnknownSection(name.to_string()));
                    }
                    sections.insert(name.to_string(), String::new());
                    current = Some(name.to_string());
                    continue;
                }
            }
            match &current {
                Some(name) => {
                    let body = sections.get_mut(name).expect("section inserted");
                    body.push_str(line);
                    body.push('\n');
                }
                None if trimmed.is_empty() || trimmed.starts_with('#') => {}
                None => return Err(TemplateError::Stray(i + 1)),
            }
        }
        for body in sections.values_mut() {
            let t = body.trim_matches('\n').to_string();
            *body = t;
        }
        for s in ["persona", "instructions", "format", "system", "user"] {
            if !sections.contains_key(s) {
                return Err(TemplateError::SectionMissing(s.to_string()));
            }
        }
        let layout = format!("{}\n{}", sections["system"], sections["user"]);
        for slot in REQUIRED_SLOTS {
            if !layout.contains(&format!("{{{{{slot}}}}}")) {
                return Err(TemplateError::TemplateSlotMissing(slot.to_string()));
            }
        }
        Ok(Self {
            sections,
            source: source.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let raw = std::fs::read_to_string(path).map_err(|e| TemplateError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&raw)
    }

    pub fn classification() -> Self {
        Self::parse(CLASSIFICATION).expect("shipped template parses")
    }

    pub fn ie() -> Self {
        Self::parse(IE).expect("shipped template parses")
    }

    pub fn section(&self, name: &str) -> Option<&str> {
        self.sections.get(name).map(String::as_str)
    }

    pub fn supports_fewshot(&self) -> bool {
        self.sections.contains_key("example")
            && format!("{}{}", self.sections["system"], self.sections["user"]).contains("{{fewshot}}")
    }

    /// Identifies the template text for config hashing.
    pub fn digest(&self) -> Digest {
        content_hash(&self.source)
    }

    fn render(&self, categories: &str, chunk: &str, fewshot: &[FewShot]) -> Result<PromptText, TemplateError> {
        let fewshot_text = if fewshot.is_empty() {
            String::new()
        } else {
            if !self.supports_fewshot() {
                return Err(TemplateError::TemplateSlotMissing("fewshot".into()));
            }
            let example = &self.sections["example"];
            let mut out = String::new();
            for shot in fewshot {
                let vars = BTreeMap::from([("input", shot.input.as_str()), ("output", shot.output.as_str())]);
                out.push_str(&fill(example, &vars)?);
                out.push_str("\n\n");
            }
            out
        };
        let mut vars: BTreeMap<&str, &str> = PROSE.iter().map(|&k| (k, self.sections[k].as_str())).collect();
        vars.insert("categories", categories);
        vars.insert("chunk", chunk);
        vars.insert("fewshot", fewshot_text.trim_end_matches('\n'));
        Ok(PromptText {
            system: fill(&self.sections["system"], &vars)?,
            user: fill(&self.sections["user"], &vars)?,
        })
    }
}

/// Replace every `{{name}}` in one pass. Replacement text is never rescanned.
fn fill(layout: &str, vars: &BTreeMap<&str, &str>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(layout.len());
    let mut rest = layout;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let Some(close) = after.find("}}") else {
            out.push_str(&rest[open..]);
            return Ok(out);
        };
        let name = &after[..close];
        let value = vars
            .get(name)
            .ok_or_else(|| TemplateError::UnknownSlot(name.to_string()))?;
        out.push_str(value);
        rest = &after[close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// One line per category: name, definition, and examples when present.
fn list_categories(categories: &CategorySet) -> String {
    categories
        .iter()
        .map(|c| {
            let mut line = format!("- {}: {}", c.name, c.definition);
            if !c.examples.is_empty() {
                line.push_str(&format!(" Examples: {}.", c.examples.join(", ")));
            }
            line
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn build_classification_prompt(
    chunk_text: &str,
    categories: &CategorySet,
    template: &PromptTemplate,
    fewshot: &[FewShot],
) -> Result<PromptText, TemplateError> {
    template.render(&list_categories(categories), chunk_text, fewshot)
}

pub fn build_ie_prompt(
    chunk_text: &str,
    categories: &CategorySet,
    template: &PromptTemplate,
    fewshot: &[FewShot],
) -> Result<PromptText, TemplateError> {
    template.render(&list_categories(categories), chunk_text, fewshot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TagCategory;

    fn person() -> CategorySet {
        CategorySet::new(vec![
            TagCategory::new("Person", "A human being, real or fictional.").with_examples(["Marie Curie"])
        ])
        .unwrap()
    }

    #[test]
    fn default_template_fills_every_slot() {
        let c = "Yuki lives next to the Semper Opera House.";
        let p = build_classification_prompt(c, &person(), &PromptTemplate::classification(), &[]).unwrap();
        let all = format!("{}\n{}", p.system, p.user);
        assert!(all.contains("Person"));
        assert!(all.contains("A human being, real or fictional."));
        assert!(all.contains(c));
        assert!(all.contains("JSON array"));
        assert!(!all.contains("{{"));
        let ie = build_ie_prompt(c, &person(), &PromptTemplate::ie(), &[]).unwrap();
        assert!(ie.user.contains(c));
    }

    #[test]
    fn exemplars_precede_chunk() {
        let shots = [
            FewShot {
                input: "Ada wrote notes.".into(),
                output: r#"["Person"]"#.into(),
            },
            FewShot {
                input: "It rained.".into(),
                output: "[]".into(),
            },
        ];
        let p =
            build_classification_prompt("CHUNK-TEXT", &person(), &PromptTemplate::classification(), &shots).unwrap();
        let chunk_at = p.user.find("CHUNK-TEXT").unwrap();
        let a = p.user.find("Ada wrote notes.").unwrap();
        let b = p.user.find("It rained.").unwrap();
        assert!(a < b && b < chunk_at);
    }

    #[test]
    fn deterministic() {
        let t = PromptTemplate::classification();
        let a = build_classification_prompt("x", &person(), &t, &[]).unwrap();
        let b = build_classification_prompt("x", &person(), &t, &[]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn slot_syntax_in_chunk_is_not_expanded() {
        let c = "literal {{persona}} and {{nope}}";
        let p = build_ie_prompt(c, &person(), &PromptTemplate::ie(), &[]).unwrap();
        assert!(p.user.contains(c));
    }

    #[test]
    fn missing_slot_is_reported() {
        let src = "[persona]\np\n[instructions]\ni\n[format]\nf\n[system]\n{{persona}} {{instructions}} {{format}}\n[user]\n{{categories}}\n";
        assert_eq!(
            PromptTemplate::parse(src),
            Err(TemplateError::TemplateSlotMissing("chunk".into()))
        );
        let no_fewshot = format!("{src}{{{{chunk}}}}\n");
        let t = PromptTemplate::parse(&no_fewshot).unwrap();
        let shot = FewShot {
            input: "a".into(),
            output: "[]".into(),
        };
        assert_eq!(
            build_classification_prompt("c", &person(), &t, &[shot]),
            Err(TemplateError::TemplateSlotMissing("fewshot".into()))
        );
    }

    #[test]
    fn malformed_templates() {
        assert!(matches!(
            PromptTemplate::parse("hello\n[persona]\n"),
            Err(TemplateError::Stray(1))
        ));
        assert!(matches!(
            PromptTemplate::parse("[bogus]\n"),
            Err(TemplateError::UnknownSection(_))
        ));
        assert!(matches!(
            PromptTemplate::parse("[persona]\nx\n"),
            Err(TemplateError::SectionMissing(_))
        ));
    }
}
