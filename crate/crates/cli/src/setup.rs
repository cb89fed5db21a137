//! Turning flags into library objects.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use tagforge_core::annotator::{MarkupLevel, MarkupPolicy};
use tagforge_core::cache::TagCache;
use tagforge_core::chunker::{ChunkStrategy, ChunkingConfig};
use tagforge_core::gateway::{FixtureStore, HttpModel, LanguageModel, Limited, MockModel, RecordReplay, RetryPolicy};
use tagforge_core::io::read_jsonl;
use tagforge_core::taggers::categories::ner18;
use tagforge_core::taggers::{
    BridgeProcess, BridgeTransport, ClassificationTagger, EntityLabelMap, ExternalTagger, FixtureBridge,
    GazetteerTagger, HybridTagger, IeTagger, Lexicon, LlmSettings, Matching, PromptTemplate, Tagger, TaggerConfig,
    TaggerKind,
};
use tagforge_core::tokens::EstimatorMode;
use tagforge_core::{CategorySet, Document, TagCategory};

use crate::args::{ChunkOpts, Estimator, GatewayChoice, Level, Strategy, TaggerChoice, TaggerOpts};

/// Apply the keys of a `--config` object over parsed flags. Keys use the
/// flag names with either dashes or underscores.
pub fn overlay<T: Serialize + DeserializeOwned>(args: T, config: Option<&Value>) -> Result<T> {
    let Some(config) = config else { return Ok(args) };
    let Value::Object(over) = config else {
        bail!("config file must hold a JSON object")
    };
    let Value::Object(mut base) = serde_json::to_value(&args)? else {
        unreachable!("args serialize to objects")
    };
    for (k, v) in over {
        let key = k.replace('-', "_");
        if !base.contains_key(&key) {
            bail!("config key {k:?} is not an option of this command");
        }
        base.insert(key, v.clone());
    }
    serde_json::from_value(Value::Object(base)).context("config file")
}

pub fn load_config(path: Option<&Path>) -> Result<Option<Value>> {
    let Some(path) = path else { return Ok(None) };
    let raw = std::fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
    Ok(Some(
        serde_json::from_str(&raw).with_context(|| format!("{}", path.display()))?,
    ))
}

pub fn documents(path: &Path) -> Result<Vec<Document>> {
    Ok(read_jsonl(path)?)
}

pub fn estimator(e: Estimator) -> EstimatorMode {
    match e {
        Estimator::Chars => EstimatorMode::CharsDiv4,
        Estimator::Words => EstimatorMode::WhitespaceWordsX4over3,
    }
}

pub fn chunking(o: &ChunkOpts) -> Result<ChunkingConfig> {
    let strategy = match o.strategy {
        Strategy::Sentence => ChunkStrategy::Sentence,
        Strategy::Paragraph => ChunkStrategy::Paragraph,
        Strategy::TokenWindow => ChunkStrategy::TokenWindow,
    };
    let mut cfg = ChunkingConfig::new(strategy, o.max_chunk_size);
    cfg.estimator = estimator(o.estimator);
    cfg.validate()?;
    Ok(cfg)
}

pub fn policy(level: Level) -> MarkupPolicy {
    MarkupPolicy {
        level: match level {
            Level::Chunk => MarkupLevel::Chunk,
            Level::Entity => MarkupLevel::Entity,
            Level::Both => MarkupLevel::Both,
        },
        ..MarkupPolicy::default()
    }
}

pub fn categories(path: Option<&Path>) -> Result<CategorySet> {
    let Some(path) = path else { return Ok(ner18()) };
    let raw = std::fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
    let cats: Vec<TagCategory> = serde_json::from_str(&raw).with_context(|| format!("{}", path.display()))?;
    CategorySet::new(cats).with_context(|| format!("{}", path.display()))
}

pub fn cache(o: &TaggerOpts) -> Result<Option<TagCache>> {
    o.cache
        .as_ref()
        .map(|d| TagCache::open(d).with_context(|| format!("cache {}", d.display())))
        .transpose()
}

/// Model id for a gateway: the flag, then `TAGFORGE_MODEL`, then the gateway
/// name for the offline ones.
pub fn model_id(flag: Option<&str>, gateway: GatewayChoice) -> Result<String> {
    if let Some(m) = flag {
        return Ok(m.to_string());
    }
    if let Some(m) = HttpModel::model_id_from_env() {
        return Ok(m);
    }
    match gateway {
        GatewayChoice::Oracle => Ok("oracle".into()),
        GatewayChoice::Empty => Ok("empty".into()),
        _ => bail!("no model id: pass --model (or --tag-model) or set TAGFORGE_MODEL"),
    }
}

/// A language model for `choice`. `oracle` is only available where the
/// caller has gold data to answer from.
pub fn language_model(
    choice: GatewayChoice,
    fixtures: Option<&Path>,
    oracle: Option<MockModel>,
    max_in_flight: usize,
    rate: Option<f64>,
) -> Result<Arc<dyn LanguageModel>> {
    let store = || -> Result<FixtureStore> {
        let dir = fixtures.context("the replay and record gateways need a fixture directory")?;
        FixtureStore::open(dir).with_context(|| format!("fixtures {}", dir.display()))
    };
    let http = || -> Result<Arc<dyn LanguageModel>> {
        let m = HttpModel::from_env(RetryPolicy::default())?;
        Ok(Arc::new(Limited::new(m, max_in_flight, rate)))
    };
    Ok(match choice {
        GatewayChoice::Oracle => Arc::new(oracle.context("the oracle gateway only answers benchmark questions")?),
        GatewayChoice::Empty => Arc::new(MockModel::constant("")),
        GatewayChoice::Replay => Arc::new(RecordReplay::replay(store()?)),
        GatewayChoice::Record => Arc::new(RecordReplay::record(store()?, http()?)),
        GatewayChoice::Http => http()?,
    })
}

fn template(path: Option<&Path>, default: fn() -> PromptTemplate) -> Result<PromptTemplate> {
    match path {
        Some(p) => PromptTemplate::load(p).with_context(|| format!("{}", p.display())),
        None => Ok(default()),
    }
}

pub fn tagger(o: &TaggerOpts, cats: &CategorySet) -> Result<Box<dyn Tagger>> {
    let config = |kind| TaggerConfig::new(kind, cats.clone());
    Ok(match o.tagger {
        TaggerChoice::Gazetteer => {
            let path = o.lexicon.as_ref().context("the gazetteer tagger needs --lexicon")?;
            let matching = if o.case_insensitive {
                Matching::CaseInsensitive
            } else {
                Matching::CaseSensitive
            };
            let lex = Lexicon::load(path, matching)?;
            let mut cfg = config(TaggerKind::Gazetteer);
            cfg.params.lexicon = Some(lex.digest());
            Box::new(GazetteerTagger::new(cfg, &lex).with_context(|| format!("{}", path.display()))?)
        }
        TaggerChoice::External => {
            let transport: Box<dyn BridgeTransport> = match (&o.bridge_fixture, &o.bridge_cmd) {
                (Some(f), _) => Box::new(FixtureBridge::load(f).with_context(|| format!("{}", f.display()))?),
                (None, Some(cmd)) => {
                    let argv: Vec<String> = cmd.split_whitespace().map(String::from).collect();
                    Box::new(BridgeProcess::spawn(&argv)?)
                }
                (None, None) => bail!("the external tagger needs --bridge-cmd or --bridge-fixture"),
            };
            let labels = match &o.label_map {
                Some(p) => EntityLabelMap::load(p).with_context(|| format!("{}", p.display()))?,
                None => EntityLabelMap::identity(cats.iter().map(|c| c.name.clone())),
            };
            let mut cfg = config(TaggerKind::External);
            let hs = transport.handshake();
            cfg.params.bridge = Some(format!("{} v{} [{}]", hs.protocol, hs.version, hs.labels.join(",")));
            cfg.params.label_map = Some(labels.digest());
            Box::new(ExternalTagger::new(cfg, labels, transport))
        }
        kind => {
            let model = model_id(o.tag_model.as_deref(), o.tag_gateway)?;
            let llm = language_model(o.tag_gateway, o.tag_fixtures.as_deref(), None, o.max_in_flight, None)?;
            let settings = LlmSettings::new(model);
            let cls = || template(o.classification_template.as_deref(), PromptTemplate::classification);
            let ie = || template(o.ie_template.as_deref(), PromptTemplate::ie);
            match kind {
                TaggerChoice::LlmClassification => Box::new(ClassificationTagger::new(
                    config(TaggerKind::LlmClassification),
                    llm,
                    cls()?,
                    settings,
                )),
                TaggerChoice::LlmIe => Box::new(IeTagger::new(config(TaggerKind::LlmIe), llm, ie()?, settings)),
                _ => Box::new(HybridTagger::new(
                    config(TaggerKind::Hybrid),
                    llm,
                    cls()?,
                    ie()?,
                    settings,
                )),
            }
        }
    })
}
