use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{CompletionRequest, CompletionResult, GatewayError, LanguageModel};
use crate::model::Digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayMode {
    /// Forward to the inner model and store every new response.
    Record,
    /// Serve only from the store; a miss is an error.
    Replay,
    /// Forward to the inner model, store nothing.
    Passthrough,
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureEntry {
    request: CompletionRequest,
    result: CompletionResult,
}

/// Directory of `<request-digest>.json` files. Entries are never overwritten.
#[derive(Debug, Clone)]
pub struct FixtureStore {
    dir: PathBuf,
}

impl FixtureStore {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &Digest) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &Digest) -> io::Result<Option<CompletionResult>> {
        match fs::read_to_string(self.path(key)) {
            Ok(raw) => {
                let entry: FixtureEntry =
                    serde_json::from_str(&raw).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
                Ok(Some(entry.result))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Store `result` unless an entry already exists for this request.
    pub fn put(&self, req: &CompletionRequest, result: &CompletionResult) -> io::Result<()> {
        let path = self.path(&req.digest());
        if path.exists() {
            return Ok(());
        }
        let entry = FixtureEntry {
            request: req.clone(),
            result: result.clone(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        serde_json::to_writer_pretty(&mut tmp, &entry)?;
        tmp.write_all(b"\n")?;
        // persist_noclobber keeps the first writer's entry if two race
        match tmp.persist_noclobber(&path) {
            Ok(_) => Ok(()),
            Err(e) if e.error.kind() == io::ErrorKind::AlreadyExists => Ok(()),
            Err(e) => Err(e.error),
        }
    }

    pub fn len(&self) -> io::Result<usize> {
        Ok(fs::read_dir(&self.dir)?
            .filter_map(Result::ok)
            .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
            .count())
    }

    pub fn is_empty(&self) -> io::Result<bool> {
        self.len().map(|n| n == 0)
    }
}

pub struct RecordReplay {
    store: FixtureStore,
    mode: ReplayMode,
    inner: Option<Arc<dyn LanguageModel>>,
}

impl RecordReplay {
    pub fn replay(store: FixtureStore) -> Self {
        Self {
            store,
            mode: ReplayMode::Replay,
            inner: None,
        }
    }

    pub fn record(store: FixtureStore, inner: Arc<dyn LanguageModel>) -> Self {
        Self {
            store,
            mode: ReplayMode::Record,
            inner: Some(inner),
        }
    }

    pub fn passthrough(store: FixtureStore, inner: Arc<dyn LanguageModel>) -> Self {
        Self {
            store,
            mode: ReplayMode::Passthrough,
            inner: Some(inner),
        }
    }

    pub fn mode(&self) -> ReplayMode {
        self.mode
    }

    fn inner(&self) -> Result<&dyn LanguageModel, GatewayError> {
        self.inner
            .as_deref()
            .ok_or_else(|| GatewayError::Config("record/passthrough needs an inner model".into()))
    }
}

impl LanguageModel for RecordReplay {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        req.validate()?;
        match self.mode {
            ReplayMode::Replay => {
                let key = req.digest();
                self.store.get(&key)?.ok_or(GatewayError::FixtureMiss(key))
            }
            ReplayMode::Passthrough => self.inner()?.complete(req),
            ReplayMode::Record => {
                if let Some(hit) = self.store.get(&req.digest())? {
                    return Ok(hit);
                }
                let result = self.inner()?.complete(req)?;
                self.store.put(req, &result)?;
                Ok(result)
            }
        }
    }
}
