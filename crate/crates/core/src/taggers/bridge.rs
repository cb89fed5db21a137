//! Client side of the external tagger bridge.
//!
//! A bridge is a child process speaking line-delimited JSON over stdio. It
//! first writes a handshake line, then answers each request line with exactly
//! one response line, in order. See `docs/bridge-protocol.md`.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Tagger, TaggerConfig, TaggerError, TaggerStats};
use crate::annotator::{resolve_spans, MarkupPolicy};
use crate::model::{canonical_hash, Chunk, Digest, TagCategory, TagSpan, TaggedChunk};

pub const PROTOCOL_NAME: &str = "tagforge-bridge";
pub const PROTOCOL_VERSION: u32 = 1;

/// Requests written before responses are drained. Keeps both pipe buffers
/// from filling up on large batches.
const PIPELINE_WINDOW: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub protocol: String,
    pub version: u32,
    #[serde(default)]
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeRequest {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub categories: Vec<TagCategory>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeResponse {
    pub id: Option<String>,
    #[serde(default)]
    pub entities: Vec<Entity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum BridgeError {
    #[error("bridge unavailable: {0}")]
    Unavailable(String),
    #[error("protocol error at response line {line}: {reason}")]
    Protocol { line: usize, reason: String },
}

/// Anything that can answer a batch of bridge requests in order.
pub trait BridgeTransport: Send {
    fn handshake(&self) -> &Handshake;
    fn exchange(&mut self, requests: &[BridgeRequest]) -> Result<Vec<BridgeResponse>, BridgeError>;
}

fn check_handshake(h: &Handshake) -> Result<(), BridgeError> {
    if h.protocol != PROTOCOL_NAME || h.version != PROTOCOL_VERSION {
        return Err(BridgeError::Protocol {
            line: 0,
            reason: format!(
                "incompatible handshake {}/{} (want {PROTOCOL_NAME}/{PROTOCOL_VERSION})",
                h.protocol, h.version
            ),
        });
    }
    Ok(())
}

/// Line protocol over any reader/writer pair.
pub struct BridgeClient<R, W> {
    reader: R,
    writer: W,
    handshake: Handshake,
    line: usize,
}

impl<R: BufRead, W: Write> BridgeClient<R, W> {
    /// Read and check the handshake line.
    pub fn connect(mut reader: R, writer: W) -> Result<Self, BridgeError> {
        let mut first = String::new();
        let n = reader
            .read_line(&mut first)
            .map_err(|e| BridgeError::Unavailable(e.to_string()))?;
        if n == 0 {
            return Err(BridgeError::Unavailable("bridge closed before handshake".into()));
        }
        let handshake: Handshake = serde_json::from_str(first.trim()).map_err(|e| BridgeError::Protocol {
            line: 0,
            reason: format!("bad handshake: {e}"),
        })?;
        check_handshake(&handshake)?;
        Ok(Self {
            reader,
            writer,
            handshake,
            line: 0,
        })
    }

    fn read_response(&mut self) -> Result<BridgeResponse, BridgeError> {
        let mut buf = String::new();
        self.line += 1;
        let n = self
            .reader
            .read_line(&mut buf)
            .map_err(|e| BridgeError::Unavailable(e.to_string()))?;
        if n == 0 {
            return Err(BridgeError::Unavailable("bridge closed mid-batch".into()));
        }
        serde_json::from_str(buf.trim()).map_err(|e| BridgeError::Protocol {
            line: self.line,
            reason: e.to_string(),
        })
    }
}

impl<R: BufRead + Send, W: Write + Send> BridgeTransport for BridgeClient<R, W> {
    fn handshake(&self) -> &Handshake {
        &self.handshake
    }

    fn exchange(&mut self, requests: &[BridgeRequest]) -> Result<Vec<BridgeResponse>, BridgeError> {
        let mut out = Vec::with_capacity(requests.len());
        for window in requests.chunks(PIPELINE_WINDOW) {
            for req in window {
                let line = serde_json::to_string(req).expect("request serializes");
                writeln!(self.writer, "{line}").map_err(|e| BridgeError::Unavailable(e.to_string()))?;
            }
            self.writer
                .flush()
                .map_err(|e| BridgeError::Unavailable(e.to_string()))?;
            for req in window {
                let resp = self.read_response()?;
                if let Some(err) = &resp.error {
                    return Err(BridgeError::Protocol {
                        line: self.line,
                        reason: format!("bridge reported error for {}: {err}", req.id),
                    });
                }
                if resp.id.as_deref() != Some(req.id.as_str()) {
                    return Err(BridgeError::Protocol {
                        line: self.line,
                        reason: format!("expected id {}, got {:?}", req.id, resp.id),
                    });
                }
                out.push(resp);
            }
        }
        Ok(out)
    }
}

/// A spawned bridge process.
pub struct BridgeProcess {
    child: Child,
    client: Option<BridgeClient<BufReader<ChildStdout>, ChildStdin>>,
}

impl BridgeProcess {
    /// Spawn `argv[0]` with the remaining arguments.
    pub fn spawn(argv: &[String]) -> Result<Self, BridgeError> {
        let (prog, args) = argv
            .split_first()
            .ok_or_else(|| BridgeError::Unavailable("empty bridge command".into()))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BridgeError::Unavailable(format!("{prog}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let client = BridgeClient::connect(BufReader::new(stdout), stdin)?;
        Ok(Self {
            child,
            client: Some(client),
        })
    }
}

impl BridgeTransport for BridgeProcess {
    fn handshake(&self) -> &Handshake {
        self.client.as_ref().expect("client present until drop").handshake()
    }

    fn exchange(&mut self, requests: &[BridgeRequest]) -> Result<Vec<BridgeResponse>, BridgeError> {
        self.client
            .as_mut()
            .expect("client present until drop")
            .exchange(requests)
    }
}

impl Drop for BridgeProcess {
    fn drop(&mut self) {
        // closing stdin lets the bridge see EOF and exit
        self.client.take();
        let _ = self.child.wait();
    }
}

#[derive(Debug, Deserialize)]
struct FixtureLine {
    request: BridgeRequest,
    response: BridgeResponse,
}

/// Serves responses recorded from a real bridge, keyed by request text.
/// Fixture file: handshake line, then `{"request":..,"response":..}` lines.
#[derive(Debug)]
pub struct FixtureBridge {
    handshake: Handshake,
    by_text: HashMap<String, Vec<Entity>>,
}

impl FixtureBridge {
    pub fn load(path: &Path) -> Result<Self, BridgeError> {
        let raw =
            std::fs::read_to_string(path).map_err(|e| BridgeError::Unavailable(format!("{}: {e}", path.display())))?;
        let mut lines = raw.lines().filter(|l| !l.trim().is_empty());
        let handshake: Handshake = lines
            .next()
            .map(serde_json::from_str)
            .transpose()
            .map_err(|e| BridgeError::Protocol {
                line: 0,
                reason: e.to_string(),
            })?
            .ok_or_else(|| BridgeError::Unavailable("empty fixture".into()))?;
        check_handshake(&handshake)?;
        let mut by_text = HashMap::new();
        for (i, l) in lines.enumerate() {
            let f: FixtureLine = serde_json::from_str(l).map_err(|e| BridgeError::Protocol {
                line: i + 1,
                reason: e.to_string(),
            })?;
            by_text.insert(f.request.text, f.response.entities);
        }
        Ok(Self { handshake, by_text })
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.by_text.keys().map(String::as_str)
    }
}

impl BridgeTransport for FixtureBridge {
    fn handshake(&self) -> &Handshake {
        &self.handshake
    }

    fn exchange(&mut self, requests: &[BridgeRequest]) -> Result<Vec<BridgeResponse>, BridgeError> {
        requests
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let entities = self
                    .by_text
                    .get(&r.text)
                    .cloned()
                    .ok_or_else(|| BridgeError::Protocol {
                        line: i + 1,
                        reason: format!("no fixture for request {}", r.id),
                    })?;
                Ok(BridgeResponse {
                    id: Some(r.id.clone()),
                    entities,
                    error: None,
                })
            })
            .collect()
    }
}

/// NER label to category name. `None` drops the label. Labels absent from
/// the map are an error unless `drop_unmapped` is set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityLabelMap {
    pub map: BTreeMap<String, Option<String>>,
    #[serde(default)]
    pub drop_unmapped: bool,
}

impl EntityLabelMap {
    /// Every label maps to the category of the same name.
    pub fn identity<I: IntoIterator<Item = S>, S: Into<String>>(labels: I) -> Self {
        Self {
            map: labels
                .into_iter()
                .map(|l| {
                    let l = l.into();
                    (l.clone(), Some(l))
                })
                .collect(),
            drop_unmapped: false,
        }
    }

    pub fn rename(mut self, label: &str, category: &str) -> Self {
        self.map.insert(label.to_string(), Some(category.to_string()));
        self
    }

    pub fn drop_label(mut self, label: &str) -> Self {
        self.map.insert(label.to_string(), None);
        self
    }

    pub fn load(path: &Path) -> Result<Self, TaggerError> {
        let raw = std::fs::read_to_string(path).map_err(|e| TaggerError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&raw).map_err(|e| TaggerError::Io(format!("{}: {e}", path.display())))
    }

    /// `Ok(None)` means drop.
    pub fn category_for(&self, label: &str) -> Result<Option<&str>, TaggerError> {
        match self.map.get(label) {
            Some(target) => Ok(target.as_deref()),
            None if self.drop_unmapped => Ok(None),
            None => Err(TaggerError::MappingMissing(label.to_string())),
        }
    }

    pub fn digest(&self) -> Digest {
        canonical_hash(self).expect("label map serializes")
    }
}

/// Tags chunks through a bridge transport.
pub struct ExternalTagger {
    config: TaggerConfig,
    labels: EntityLabelMap,
    transport: Mutex<Box<dyn BridgeTransport>>,
}

impl ExternalTagger {
    pub fn new(config: TaggerConfig, labels: EntityLabelMap, transport: Box<dyn BridgeTransport>) -> Self {
        Self {
            config,
            labels,
            transport: Mutex::new(transport),
        }
    }

    /// Convert one bridge response into spans, dropping invalid ones.
    fn spans_for(&self, text: &str, resp: &BridgeResponse, stats: &TaggerStats) -> Result<Vec<TagSpan>, TaggerError> {
        let mut spans = Vec::with_capacity(resp.entities.len());
        let mut dropped = 0;
        for e in &resp.entities {
            let Some(category) = self.labels.category_for(&e.label)? else {
                continue;
            };
            let span = TagSpan::new(category, e.start, e.end);
            if !span.is_valid_for(text) || !self.config.categories.contains(category) {
                dropped += 1;
                continue;
            }
            spans.push(span);
        }
        let resolved = resolve_spans(text, &spans, &MarkupPolicy::default())?;
        dropped += spans.len() - resolved.len();
        if dropped > 0 {
            log::warn!("dropped {dropped} invalid bridge span(s)");
            stats.record_dropped_spans(dropped as u64);
        }
        Ok(resolved)
    }
}

impl Tagger for ExternalTagger {
    fn config(&self) -> &TaggerConfig {
        &self.config
    }

    fn tag(&self, chunk: &Chunk, stats: &TaggerStats) -> Result<TaggedChunk, TaggerError> {
        let mut out = self.tag_batch(std::slice::from_ref(chunk), stats)?;
        Ok(out.remove(0))
    }

    fn tag_batch(&self, chunks: &[Chunk], stats: &TaggerStats) -> Result<Vec<TaggedChunk>, TaggerError> {
        if chunks.is_empty() {
            return Ok(Vec::new());
        }
        let requests: Vec<BridgeRequest> = chunks
            .iter()
            .enumerate()
            .map(|(i, c)| BridgeRequest {
                id: format!("{i}:{}", &c.hash.to_hex()[..16]),
                text: c.text.clone(),
                categories: self.config.categories.as_slice().to_vec(),
            })
            .collect();
        let responses = self.transport.lock().unwrap().exchange(&requests)?;
        let provenance = self.provenance();
        chunks
            .iter()
            .zip(&responses)
            .map(|(c, r)| {
                stats.record_invocation();
                let mut tc = TaggedChunk::untagged(c.clone(), provenance.clone());
                tc.spans = self.spans_for(&c.text, r, stats)?;
                Ok(tc)
            })
            .collect()
    }

    fn concurrent(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{content_hash, CategorySet, Document};
    use crate::taggers::TaggerKind;
    use std::io::Cursor;

    fn handshake_line() -> String {
        format!(r#"{{"protocol":"{PROTOCOL_NAME}","version":{PROTOCOL_VERSION},"labels":["PERSON","GPE"]}}"#)
    }

    fn chunk(text: &str) -> Chunk {
        Chunk::from_document(&Document::new("d", text), 0, 0, text.len())
    }

    fn tagger_with(responses: &str) -> ExternalTagger {
        let input = format!("{}\n{responses}", handshake_line());
        let client = BridgeClient::connect(Cursor::new(input.into_bytes()), Vec::new()).unwrap();
        let cats = CategorySet::new(vec![
            TagCategory::new("Person", "people"),
            TagCategory::new("GPE", "places"),
        ])
        .unwrap();
        let cfg = TaggerConfig::new(TaggerKind::External, cats);
        let map = EntityLabelMap::identity(["GPE"]).rename("PERSON", "Person");
        ExternalTagger::new(cfg, map, Box::new(client))
    }

    fn id_for(i: usize, text: &str) -> String {
        format!("{i}:{}", &content_hash(text).to_hex()[..16])
    }

    #[test]
    fn maps_person_label() {
        let text = "Marie Curie";
        let resp = format!(
            r#"{{"id":"{}","entities":[{{"label":"PERSON","start":0,"end":11}}]}}"#,
            id_for(0, text)
        );
        let tagger = tagger_with(&resp);
        let stats = TaggerStats::default();
        let out = tagger.tag(&chunk(text), &stats).unwrap();
        assert_eq!(out.spans, vec![TagSpan::new("Person", 0, 11)]);
        assert_eq!(out.chunk.text, text);
        assert_eq!(stats.snapshot().invocations, 1);
    }

    #[test]
    fn empty_batch_needs_no_bridge() {
        let tagger = tagger_with("");
        assert!(tagger.tag_batch(&[], &TaggerStats::default()).unwrap().is_empty());
    }

    #[test]
    fn out_of_range_span_is_dropped_and_counted() {
        let text = "Marie Curie";
        let resp = format!(
            r#"{{"id":"{}","entities":[{{"label":"PERSON","start":0,"end":40}},{{"label":"GPE","start":6,"end":11}}]}}"#,
            id_for(0, text)
        );
        let tagger = tagger_with(&resp);
        let stats = TaggerStats::default();
        let out = tagger.tag(&chunk(text), &stats).unwrap();
        assert_eq!(out.spans, vec![TagSpan::new("GPE", 6, 11)]);
        assert_eq!(stats.snapshot().dropped_spans, 1);
    }

    #[test]
    fn unmapped_label_is_an_error_unless_dropped() {
        let text = "In 1903.";
        let resp = format!(
            r#"{{"id":"{}","entities":[{{"label":"DATE","start":3,"end":7}}]}}"#,
            id_for(0, text)
        );
        let tagger = tagger_with(&resp);
        match tagger.tag(&chunk(text), &TaggerStats::default()) {
            Err(TaggerError::MappingMissing(l)) => assert_eq!(l, "DATE"),
            other => panic!("{other:?}"),
        }
        let mut lenient = tagger_with(&resp);
        lenient.labels.drop_unmapped = true;
        assert!(lenient
            .tag(&chunk(text), &TaggerStats::default())
            .unwrap()
            .spans
            .is_empty());
    }

    #[test]
    fn protocol_errors() {
        let bad_hs = BridgeClient::connect(
            Cursor::new(b"{\"protocol\":\"other\",\"version\":1}\n".to_vec()),
            Vec::new(),
        );
        assert!(matches!(bad_hs, Err(BridgeError::Protocol { line: 0, .. })));
        let closed = BridgeClient::connect(Cursor::new(Vec::new()), Vec::new());
        assert!(matches!(closed, Err(BridgeError::Unavailable(_))));

        let tagger = tagger_with(r#"{"id":"wrong","entities":[]}"#);
        let err = tagger.tag(&chunk("x"), &TaggerStats::default()).unwrap_err();
        assert!(matches!(
            err,
            TaggerError::Bridge(BridgeError::Protocol { line: 1, .. })
        ));

        let tagger = tagger_with("not json");
        assert!(tagger.tag(&chunk("x"), &TaggerStats::default()).is_err());
    }

    #[test]
    fn requests_are_written_one_per_line() {
        let text = "a";
        let resp = format!(r#"{{"id":"{}","entities":[]}}"#, id_for(0, text));
        let input = format!("{}\n{resp}\n", handshake_line());
        let mut client = BridgeClient::connect(Cursor::new(input.into_bytes()), Vec::new()).unwrap();
        let req = BridgeRequest {
            id: id_for(0, text),
            text: text.into(),
            categories: vec![],
        };
        client.exchange(std::slice::from_ref(&req)).unwrap();
        let written = String::from_utf8(client.writer.clone()).unwrap();
        assert_eq!(written.lines().count(), 1);
        let back: BridgeRequest = serde_json::from_str(written.trim()).unwrap();
        assert_eq!(back, req);
    }
}
