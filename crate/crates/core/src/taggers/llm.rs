//! LLM-backed taggers: classification (chunk labels), inline extraction
//! (entity spans) and their hybrid merge.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::prompt::{build_classification_prompt, build_ie_prompt, FewShot, PromptTemplate};
use super::{Tagger, TaggerConfig, TaggerError, TaggerKind, TaggerStats};
use crate::annotator::{lift_spans, verify_fidelity};
use crate::gateway::{CompletionRequest, LanguageModel};
use crate::model::{canonical_hash, CategorySet, Chunk, Provenance, TaggedChunk};

const FORMAT_REMINDER: &str = "Reminder: reply with one JSON array of category names from the list, and nothing else.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmSettings {
    pub model_id: String,
    /// Classification answers are short.
    pub max_output_tokens: u32,
    /// Inline extraction echoes the chunk, so it needs room for the whole text.
    pub ie_max_output_tokens: u32,
    #[serde(default)]
    pub fewshot: Vec<FewShot>,
    #[serde(default)]
    pub ie_fewshot: Vec<FewShot>,
}

impl LlmSettings {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            max_output_tokens: 64,
            ie_max_output_tokens: 4096,
            fewshot: Vec::new(),
            ie_fewshot: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no JSON array of strings in model output")]
    UnparseableOutput,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassificationParse {
    pub labels: BTreeSet<String>,
    /// Names in the array that are not configured categories.
    pub rejected: usize,
}

/// Extract the first JSON array of strings from `raw`. Prose and code fences
/// around it are ignored. A bare `NONE` means no labels.
pub fn parse_classification_output(raw: &str, categories: &CategorySet) -> Result<ClassificationParse, ParseError> {
    let bare = raw.trim().trim_matches('`').trim();
    if bare == "NONE" {
        return Ok(ClassificationParse::default());
    }
    for (i, _) in raw.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Vec<String>>();
        if let Some(Ok(names)) = stream.next() {
            let mut out = ClassificationParse::default();
            for n in names {
                let n = n.trim();
                if categories.contains(n) {
                    out.labels.insert(n.to_string());
                } else {
                    out.rejected += 1;
                }
            }
            return Ok(out);
        }
    }
    Err(ParseError::UnparseableOutput)
}

/// Strip one enclosing code fence, if the whole reply is fenced.
fn unfence(raw: &str) -> &str {
    let t = raw.trim();
    if let Some(rest) = t.strip_prefix("```") {
        if let Some(body) = rest.strip_suffix("```") {
            // drop the info string line
            return match body.find('\n') {
                Some(nl) => body[nl + 1..].strip_suffix('\n').unwrap_or(&body[nl + 1..]),
                None => body,
            };
        }
    }
    raw
}

/// Models tend to add a trailing newline or wrap output in a fence. Undo that
/// when it cannot change the comparison against the chunk text.
fn clean_ie_output<'a>(raw: &'a str, original: &str) -> &'a str {
    let body = unfence(raw);
    if original.trim() == original {
        body.trim()
    } else {
        body
    }
}

pub struct ClassificationTagger {
    config: TaggerConfig,
    llm: Arc<dyn LanguageModel>,
    template: PromptTemplate,
    settings: LlmSettings,
}

impl ClassificationTagger {
    /// `config.params` is filled in from the model, template and settings so
    /// the config hash covers everything that shapes the output.
    pub fn new(
        mut config: TaggerConfig,
        llm: Arc<dyn LanguageModel>,
        template: PromptTemplate,
        settings: LlmSettings,
    ) -> Self {
        config.kind = TaggerKind::LlmClassification;
        config.params.model_id = Some(settings.model_id.clone());
        config.params.classification_template = Some(template.digest());
        config.params.max_output_tokens = Some(settings.max_output_tokens);
        config.params.fewshot =
            (!settings.fewshot.is_empty()).then(|| canonical_hash(&settings.fewshot).expect("fewshot serializes"));
        Self {
            config,
            llm,
            template,
            settings,
        }
    }

    fn classify(&self, text: &str, stats: &TaggerStats) -> Result<BTreeSet<String>, TaggerError> {
        let prompt =
            build_classification_prompt(text, &self.config.categories, &self.template, &self.settings.fewshot)?;
        let mut req = CompletionRequest::new(
            &self.settings.model_id,
            prompt.system,
            prompt.user,
            self.settings.max_output_tokens,
        );
        for attempt in 0..2 {
            let reply = self.llm.complete(&req)?;
            if let Ok(parsed) = parse_classification_output(&reply.text, &self.config.categories) {
                if parsed.rejected > 0 {
                    stats.record_rejected_labels(parsed.rejected as u64);
                }
                return Ok(parsed.labels);
            }
            if attempt == 0 {
                req.user = format!("{}\n\n{FORMAT_REMINDER}", req.user);
            }
        }
        log::warn!("unparseable classification output; leaving chunk unlabeled");
        stats.record_parse_failure();
        Ok(BTreeSet::new())
    }
}

impl Tagger for ClassificationTagger {
    fn config(&self) -> &TaggerConfig {
        &self.config
    }

    fn tag(&self, chunk: &Chunk, stats: &TaggerStats) -> Result<TaggedChunk, TaggerError> {
        stats.record_invocation();
        let mut out = TaggedChunk::untagged(chunk.clone(), self.provenance());
        out.chunk_labels = self.classify(&chunk.text, stats)?;
        Ok(out)
    }
}

pub struct IeTagger {
    config: TaggerConfig,
    llm: Arc<dyn LanguageModel>,
    template: PromptTemplate,
    settings: LlmSettings,
    names: BTreeSet<String>,
}

impl IeTagger {
    pub fn new(
        mut config: TaggerConfig,
        llm: Arc<dyn LanguageModel>,
        template: PromptTemplate,
        settings: LlmSettings,
    ) -> Self {
        config.kind = TaggerKind::LlmIe;
        config.params.model_id = Some(settings.model_id.clone());
        config.params.ie_template = Some(template.digest());
        config.params.ie_max_output_tokens = Some(settings.ie_max_output_tokens);
        config.params.fewshot = (!settings.ie_fewshot.is_empty())
            .then(|| canonical_hash(&settings.ie_fewshot).expect("fewshot serializes"));
        let names = config.categories.names();
        Self {
            config,
            llm,
            template,
            settings,
            names,
        }
    }
}

impl Tagger for IeTagger {
    fn config(&self) -> &TaggerConfig {
        &self.config
    }

    fn tag(&self, chunk: &Chunk, stats: &TaggerStats) -> Result<TaggedChunk, TaggerError> {
        stats.record_invocation();
        let prompt = build_ie_prompt(
            &chunk.text,
            &self.config.categories,
            &self.template,
            &self.settings.ie_fewshot,
        )?;
        let req = CompletionRequest::new(
            &self.settings.model_id,
            prompt.system,
            prompt.user,
            self.settings.ie_max_output_tokens,
        );
        let reply = self.llm.complete(&req)?;
        let marked = clean_ie_output(&reply.text, &chunk.text);
        let mut out = TaggedChunk::untagged(chunk.clone(), self.provenance());
        let report = verify_fidelity(&chunk.text, marked, &self.names);
        let lifted = report.ok.then(|| lift_spans(marked, &self.names).ok()).flatten();
        match lifted {
            Some((text, spans)) if text == chunk.text => out.spans = spans,
            _ => {
                log::warn!(
                    "inline extraction changed the text (first divergence {:?}, balanced {}); spans discarded",
                    report.first_divergence,
                    report.balanced
                );
                stats.record_fidelity_failure();
                out.fidelity_failed = true;
            }
        }
        Ok(out)
    }
}

/// Union of classification labels and IE span categories. IE spans are kept
/// as they are (already empty when fidelity failed).
pub fn merge_hybrid(ie: TaggedChunk, cls: TaggedChunk, provenance: Provenance) -> Result<TaggedChunk, TaggerError> {
    if ie.chunk.hash != cls.chunk.hash {
        return Err(TaggerError::ChunkMismatch(ie.chunk.hash, cls.chunk.hash));
    }
    let mut labels = cls.chunk_labels.clone();
    labels.extend(ie.categories());
    let mut provenance = provenance;
    provenance.parts = vec![ie.provenance.clone(), cls.provenance.clone()];
    Ok(TaggedChunk {
        chunk: ie.chunk,
        chunk_labels: labels,
        spans: ie.spans,
        provenance,
        fidelity_failed: ie.fidelity_failed,
    })
}

pub struct HybridTagger {
    config: TaggerConfig,
    ie: IeTagger,
    cls: ClassificationTagger,
}

impl HybridTagger {
    pub fn new(
        config: TaggerConfig,
        llm: Arc<dyn LanguageModel>,
        classification_template: PromptTemplate,
        ie_template: PromptTemplate,
        settings: LlmSettings,
    ) -> Self {
        let cls = ClassificationTagger::new(config.clone(), llm.clone(), classification_template, settings.clone());
        let ie = IeTagger::new(config.clone(), llm, ie_template, settings);
        let mut config = config;
        config.kind = TaggerKind::Hybrid;
        let (c, i) = (&cls.config.params, &ie.config.params);
        config.params.model_id = c.model_id.clone();
        config.params.classification_template = c.classification_template;
        config.params.max_output_tokens = c.max_output_tokens;
        config.params.ie_template = i.ie_template;
        config.params.ie_max_output_tokens = i.ie_max_output_tokens;
        config.params.fewshot = canonical_hash(&(c.fewshot, i.fewshot))
            .ok()
            .filter(|_| c.fewshot.is_some() || i.fewshot.is_some());
        Self { config, ie, cls }
    }
}

impl Tagger for HybridTagger {
    fn config(&self) -> &TaggerConfig {
        &self.config
    }

    /// Sub-tagger calls are counted in `stats`, so one hybrid chunk records
    /// two invocations.
    fn tag(&self, chunk: &Chunk, stats: &TaggerStats) -> Result<TaggedChunk, TaggerError> {
        let ie = self.ie.tag(chunk, stats)?;
        let cls = self.cls.tag(chunk, stats)?;
        merge_hybrid(ie, cls, self.provenance())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockModel;
    use crate::model::{Digest, Document, TagCategory, TagSpan};

    fn cats() -> CategorySet {
        CategorySet::new(vec![
            TagCategory::new("Person", "A human being."),
            TagCategory::new("Location", "A place."),
        ])
        .unwrap()
    }

    fn chunk(text: &str) -> Chunk {
        Chunk::from_document(&Document::new("d", text), 0, 0, text.len())
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn cls_tagger(mock: Arc<MockModel>) -> ClassificationTagger {
        let cfg = TaggerConfig::new(TaggerKind::LlmClassification, cats());
        ClassificationTagger::new(cfg, mock, PromptTemplate::classification(), LlmSettings::new("mock"))
    }

    fn ie_tagger(mock: Arc<MockModel>) -> IeTagger {
        let cfg = TaggerConfig::new(TaggerKind::LlmIe, cats());
        IeTagger::new(cfg, mock, PromptTemplate::ie(), LlmSettings::new("mock"))
    }

    #[test]
    fn parse_examples() {
        let c = cats();
        assert_eq!(
            parse_classification_output(r#"["Person","Location"]"#, &c)
                .unwrap()
                .labels,
            set(&["Person", "Location"])
        );
        let p = parse_classification_output(r#"Tags: ["Person","Hero"]"#, &c).unwrap();
        assert_eq!(p.labels, set(&["Person"]));
        assert_eq!(p.rejected, 1);
        assert!(parse_classification_output("[]", &c).unwrap().labels.is_empty());
        assert!(parse_classification_output("NONE", &c).unwrap().labels.is_empty());
        assert_eq!(
            parse_classification_output("no idea", &c),
            Err(ParseError::UnparseableOutput)
        );
    }

    #[test]
    fn parse_skips_non_string_arrays_and_fences() {
        let c = cats();
        let raw = "Scores [1, 2] then\n```json\n[\"Location\"]\n```";
        assert_eq!(parse_classification_output(raw, &c).unwrap().labels, set(&["Location"]));
    }

    #[test]
    fn classification_labels_and_untouched_text() {
        let mock = Arc::new(MockModel::constant(r#"["Location"]"#));
        let stats = TaggerStats::default();
        let text = "Yuki lives next to the Semper Opera House.";
        let out = cls_tagger(mock.clone()).tag(&chunk(text), &stats).unwrap();
        assert_eq!(out.chunk_labels, set(&["Location"]));
        assert_eq!(out.chunk.text, text);
        assert!(out.spans.is_empty());
        assert_eq!(mock.calls(), 1);
    }

    #[test]
    fn classification_retries_once_then_records_failure() {
        let mock = Arc::new(MockModel::constant("I think it is about a person."));
        let stats = TaggerStats::default();
        let out = cls_tagger(mock.clone()).tag(&chunk("Ann ran."), &stats).unwrap();
        assert!(out.chunk_labels.is_empty());
        assert_eq!(mock.calls(), 2);
        assert_eq!(stats.snapshot().parse_failures, 1);
    }

    #[test]
    fn classification_retry_can_recover() {
        let mock = Arc::new(MockModel::from_fn(|req| {
            Ok(if req.user.contains(FORMAT_REMINDER) {
                r#"["Person"]"#
            } else {
                "Person, probably"
            }
            .to_string())
        }));
        let stats = TaggerStats::default();
        let out = cls_tagger(mock).tag(&chunk("Ann ran."), &stats).unwrap();
        assert_eq!(out.chunk_labels, set(&["Person"]));
        assert_eq!(stats.snapshot().parse_failures, 0);
    }

    #[test]
    fn ie_lifts_inline_tags() {
        let mock = Arc::new(MockModel::constant("<Person>Marie Curie</Person> won."));
        let out = ie_tagger(mock)
            .tag(&chunk("Marie Curie won."), &TaggerStats::default())
            .unwrap();
        assert_eq!(out.spans, vec![TagSpan::new("Person", 0, 11)]);
        assert!(!out.fidelity_failed);
    }

    #[test]
    fn ie_downgrades_altered_text() {
        let mock = Arc::new(MockModel::constant("Mary Curie won."));
        let stats = TaggerStats::default();
        let out = ie_tagger(mock).tag(&chunk("Marie Curie won."), &stats).unwrap();
        assert!(out.fidelity_failed);
        assert!(out.spans.is_empty());
        assert_eq!(out.chunk.text, "Marie Curie won.");
        assert_eq!(stats.snapshot().fidelity_failures, 1);
    }

    #[test]
    fn ie_echo_and_fence() {
        let text = "Marie Curie won.";
        let echo = ie_tagger(Arc::new(MockModel::constant(text)))
            .tag(&chunk(text), &TaggerStats::default())
            .unwrap();
        assert!(echo.spans.is_empty() && !echo.fidelity_failed);
        let fenced = "```xml\n<Person>Marie Curie</Person> won.\n```\n";
        let out = ie_tagger(Arc::new(MockModel::constant(fenced)))
            .tag(&chunk(text), &TaggerStats::default())
            .unwrap();
        assert_eq!(out.spans, vec![TagSpan::new("Person", 0, 11)]);
    }

    #[test]
    fn ie_unknown_or_crossing_tags_fail() {
        let text = "Marie Curie won.";
        for bad in [
            "<Hero>Marie Curie</Hero> won.",
            "<Person>Marie <Location>Curie</Person> won.</Location>",
        ] {
            let out = ie_tagger(Arc::new(MockModel::constant(bad)))
                .tag(&chunk(text), &TaggerStats::default())
                .unwrap();
            assert!(out.fidelity_failed, "{bad}");
        }
    }

    fn tc(text: &str, labels: &[&str], spans: Vec<TagSpan>, failed: bool) -> TaggedChunk {
        let mut t = TaggedChunk::untagged(chunk(text), Provenance::new("x", Digest::of_bytes(b"x")));
        t.chunk_labels = set(labels);
        t.spans = spans;
        t.fidelity_failed = failed;
        t
    }

    #[test]
    fn merge_rules() {
        let prov = Provenance::new("hybrid", Digest::of_bytes(b"h"));
        let ie = tc("Ann", &[], vec![TagSpan::new("Person", 0, 3)], false);
        let m = merge_hybrid(ie, tc("Ann", &["Location"], vec![], false), prov.clone()).unwrap();
        assert_eq!(m.chunk_labels, set(&["Person", "Location"]));
        assert_eq!(m.spans.len(), 1);
        assert_eq!(m.provenance.parts.len(), 2);

        let m = merge_hybrid(
            tc("Ann", &[], vec![], true),
            tc("Ann", &["Person"], vec![], false),
            prov.clone(),
        )
        .unwrap();
        assert_eq!(m.chunk_labels, set(&["Person"]));
        assert!(m.spans.is_empty() && m.fidelity_failed);

        let m = merge_hybrid(
            tc("Ann", &[], vec![], false),
            tc("Ann", &[], vec![], false),
            prov.clone(),
        )
        .unwrap();
        assert!(m.is_empty());

        assert!(matches!(
            merge_hybrid(tc("Ann", &[], vec![], false), tc("Bob", &[], vec![], false), prov),
            Err(TaggerError::ChunkMismatch(..))
        ));
    }

    #[test]
    fn hybrid_end_to_end() {
        let mock = Arc::new(MockModel::from_fn(|req| {
            Ok(if req.system.contains("JSON array") {
                r#"["Location"]"#.to_string()
            } else {
                "<Person>Yuki</Person> lives in Dresden.".to_string()
            })
        }));
        let cfg = TaggerConfig::new(TaggerKind::Hybrid, cats());
        let h = HybridTagger::new(
            cfg,
            mock,
            PromptTemplate::classification(),
            PromptTemplate::ie(),
            LlmSettings::new("m"),
        );
        let stats = TaggerStats::default();
        let out = h.tag(&chunk("Yuki lives in Dresden."), &stats).unwrap();
        assert_eq!(out.chunk_labels, set(&["Location", "Person"]));
        assert_eq!(out.spans, vec![TagSpan::new("Person", 0, 4)]);
        assert_eq!(out.provenance.tagger, "hybrid");
        assert_eq!(stats.snapshot().invocations, 2);
    }
}
