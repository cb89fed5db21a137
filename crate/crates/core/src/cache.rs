//! Content-addressed store of tagging results.
//!
//! Layout: `<root>/ab/cd/<key hex>.json`, one entry per file. Each entry holds
//! the result as canonical JSON plus its SHA-256, so a torn or edited file is
//! detected and treated as a miss. Writers go through a temp file and an
//! atomic rename, so concurrent writers (threads or processes) need no lock.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::model::{canonical_hash, canonical_json, Digest, TaggedChunk};
use crate::taggers::TaggerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub digest: Digest,
    pub config_hash: Digest,
    pub chunk_hash: Digest,
}

#[derive(Serialize)]
struct KeyParts<'a> {
    kind: &'a str,
    version: &'a str,
    config_hash: Digest,
    chunk_hash: Digest,
}

impl CacheKey {
    pub fn new(kind: &str, version: &str, config_hash: Digest, chunk_hash: Digest) -> Self {
        let digest = canonical_hash(&KeyParts {
            kind,
            version,
            config_hash,
            chunk_hash,
        })
        .expect("key serializes");
        Self {
            digest,
            config_hash,
            chunk_hash,
        }
    }

    pub fn for_config(config: &TaggerConfig, chunk_hash: Digest) -> Self {
        Self::new(config.kind.as_str(), &config.version, config.digest(), chunk_hash)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache I/O at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cache is full: {0}")]
    StoreFull(String),
    #[error("value does not belong to key: {0}")]
    KeyMismatch(&'static str),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CacheError + '_ {
    move |source| {
        if source.raw_os_error() == Some(28) {
            CacheError::StoreFull(path.display().to_string())
        } else {
            CacheError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Entry {
    checksum: Digest,
    value: serde_json::Value,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheCounters {
    pub hits: u64,
    pub misses: u64,
    pub corrupt: u64,
    pub writes: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub entries: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcReport {
    pub removed: u64,
    pub freed_bytes: u64,
    pub remaining_bytes: u64,
}

#[derive(Debug)]
pub struct TagCache {
    root: PathBuf,
    hits: AtomicU64,
    misses: AtomicU64,
    corrupt: AtomicU64,
    writes: AtomicU64,
}

impl TagCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self {
            root,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            corrupt: AtomicU64::new(0),
            writes: AtomicU64::new(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path_for(&self, key: &CacheKey) -> PathBuf {
        let hex = key.digest.to_hex();
        self.root.join(&hex[0..2]).join(&hex[2..4]).join(format!("{hex}.json"))
    }

    pub fn get(&self, key: &CacheKey) -> Option<TaggedChunk> {
        let path = self.path_for(key);
        let raw = match fs::read(&path) {
            Ok(raw) => raw,
            Err(e) => {
                if e.kind() != io::ErrorKind::NotFound {
                    log::warn!("cache read {}: {e}", path.display());
                }
                self.misses.fetch_add(1, Ordering::Relaxed);
                return None;
            }
        };
        match decode(&raw, key) {
            Some(v) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                Some(v)
            }
            None => {
                log::warn!("corrupt cache entry {}; treating as a miss", path.display());
                self.corrupt.fetch_add(1, Ordering::Relaxed);
                self.misses.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    pub fn put(&self, key: &CacheKey, value: &TaggedChunk) -> Result<(), CacheError> {
        if value.provenance.config_hash != key.config_hash {
            return Err(CacheError::KeyMismatch("provenance config hash differs"));
        }
        if value.chunk.hash != key.chunk_hash {
            return Err(CacheError::KeyMismatch("chunk hash differs"));
        }
        let body = canonical_json(value).expect("tagged chunk serializes");
        let entry = Entry {
            checksum: Digest::of_bytes(body.as_bytes()),
            value: serde_json::from_str(&body).expect("round trip"),
        };
        let bytes = canonical_json(&entry).expect("entry serializes");

        let path = self.path_for(key);
        let dir = path.parent().expect("fan-out dir");
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
        tmp.write_all(bytes.as_bytes()).map_err(io_err(tmp.path()))?;
        tmp.as_file().sync_all().map_err(io_err(&path))?;
        // rename over any existing entry: same key means same value
        tmp.persist(&path).map_err(|e| io_err(&path)(e.error))?;
        self.writes.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    pub fn counters(&self) -> CacheCounters {
        CacheCounters {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            corrupt: self.corrupt.load(Ordering::Relaxed),
            writes: self.writes.load(Ordering::Relaxed),
        }
    }

    fn entries(&self) -> Result<Vec<(PathBuf, u64, std::time::SystemTime)>, CacheError> {
        let mut out = Vec::new();
        for a in read_dir_sorted(&self.root)? {
            if !a.is_dir() {
                continue;
            }
            for b in read_dir_sorted(&a)? {
                if !b.is_dir() {
                    continue;
                }
                for f in read_dir_sorted(&b)? {
                    if f.extension().is_some_and(|e| e == "json") {
                        let meta = fs::metadata(&f).map_err(io_err(&f))?;
                        out.push((f, meta.len(), meta.modified().map_err(io_err(&b))?));
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn stats(&self) -> Result<CacheStats, CacheError> {
        let entries = self.entries()?;
        Ok(CacheStats {
            entries: entries.len() as u64,
            bytes: entries.iter().map(|e| e.1).sum(),
        })
    }

    /// Delete least recently written entries until at most `max_bytes` remain.
    pub fn gc(&self, max_bytes: u64) -> Result<GcReport, CacheError> {
        let mut entries = self.entries()?;
        let mut total: u64 = entries.iter().map(|e| e.1).sum();
        entries.sort_by(|a, b| a.2.cmp(&b.2).then_with(|| a.0.cmp(&b.0)));
        let mut report = GcReport::default();
        for (path, len, _) in entries {
            if total <= max_bytes {
                break;
            }
            match fs::remove_file(&path) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(io_err(&path)(e)),
            }
            total -= len;
            report.removed += 1;
            report.freed_bytes += len;
        }
        report.remaining_bytes = total;
        Ok(report)
    }
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>, CacheError> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).map_err(io_err(dir))? {
        out.push(e.map_err(io_err(dir))?.path());
    }
    out.sort();
    Ok(out)
}

fn decode(raw: &[u8], key: &CacheKey) -> Option<TaggedChunk> {
    let entry: Entry = serde_json::from_slice(raw).ok()?;
    let body = canonical_json(&entry.value).ok()?;
    if Digest::of_bytes(body.as_bytes()) != entry.checksum {
        return None;
    }
    let value: TaggedChunk = serde_json::from_value(entry.value).ok()?;
    (value.chunk.hash == key.chunk_hash && value.provenance.config_hash == key.config_hash).then_some(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CategorySet, Chunk, Document, TagCategory, TagSpan};
    use crate::taggers::{TaggerKind, TaggerParams};
    use std::sync::Arc;

    fn config(lexicon: &[u8]) -> TaggerConfig {
        let cats = CategorySet::new(vec![TagCategory::new("Person", "p")]).unwrap();
        TaggerConfig::new(TaggerKind::Gazetteer, cats).with_params(TaggerParams {
            lexicon: Some(Digest::of_bytes(lexicon)),
            ..Default::default()
        })
    }

    fn value(cfg: &TaggerConfig, text: &str) -> (CacheKey, TaggedChunk) {
        let chunk = Chunk::from_document(&Document::new("d", text), 0, 0, text.len());
        let mut tc = TaggedChunk::untagged(chunk, crate::model::Provenance::new("gazetteer", cfg.digest()));
        tc.spans.push(TagSpan::new("Person", 0, text.len().min(3)));
        (CacheKey::for_config(cfg, tc.chunk.hash), tc)
    }

    #[test]
    fn put_get_and_absent() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TagCache::open(dir.path()).unwrap();
        let (k, v) = value(&config(b"a"), "Ann ran.");
        assert_eq!(cache.get(&k), None);
        cache.put(&k, &v).unwrap();
        assert_eq!(cache.get(&k), Some(v));
        let c = cache.counters();
        assert_eq!((c.hits, c.misses, c.writes), (1, 1, 1));
    }

    #[test]
    fn config_change_changes_key() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TagCache::open(dir.path()).unwrap();
        let (k1, v1) = value(&config(b"a"), "Ann ran.");
        let (k2, v2) = value(&config(b"b"), "Ann ran.");
        assert_ne!(k1.digest, k2.digest);
        cache.put(&k1, &v1).unwrap();
        cache.put(&k2, &v2).unwrap();
        assert_eq!(cache.get(&k1), Some(v1));
        assert_eq!(cache.get(&k2), Some(v2));
        assert_ne!(
            CacheKey::new("gazetteer", "1", k1.config_hash, k1.chunk_hash).digest,
            CacheKey::new("gazetteer", "2", k1.config_hash, k1.chunk_hash).digest
        );
    }

    #[test]
    fn double_put_is_one_entry_and_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let (k, v) = value(&config(b"a"), "Ann ran.");
        {
            let cache = TagCache::open(dir.path()).unwrap();
            cache.put(&k, &v).unwrap();
            cache.put(&k, &v).unwrap();
            assert_eq!(cache.stats().unwrap().entries, 1);
        }
        let reopened = TagCache::open(dir.path()).unwrap();
        assert_eq!(reopened.get(&k), Some(v));
    }

    #[test]
    fn rejects_foreign_values() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TagCache::open(dir.path()).unwrap();
        let (k, _) = value(&config(b"a"), "Ann ran.");
        let (_, other) = value(&config(b"b"), "Ann ran.");
        assert!(matches!(cache.put(&k, &other), Err(CacheError::KeyMismatch(_))));
    }

    #[test]
    fn torn_or_edited_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TagCache::open(dir.path()).unwrap();
        let (k, v) = value(&config(b"a"), "Ann ran.");
        cache.put(&k, &v).unwrap();
        let path = cache.path_for(&k);
        let full = fs::read_to_string(&path).unwrap();

        fs::write(&path, &full[..full.len() / 2]).unwrap();
        assert_eq!(cache.get(&k), None);

        fs::write(&path, full.replace("Ann ran.", "Bob ran.")).unwrap();
        assert_eq!(cache.get(&k), None);
        assert_eq!(cache.counters().corrupt, 2);

        cache.put(&k, &v).unwrap();
        assert_eq!(cache.get(&k), Some(v));
    }

    #[test]
    fn concurrent_distinct_puts() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(TagCache::open(dir.path()).unwrap());
        let cfg = config(b"a");
        let handles: Vec<_> = (0..10)
            .map(|t| {
                let cache = cache.clone();
                let cfg = cfg.clone();
                std::thread::spawn(move || {
                    (0..20)
                        .map(|i| {
                            let (k, v) = value(&cfg, &format!("thread {t} item {i}"));
                            cache.put(&k, &v).unwrap();
                            (k, v)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let written: Vec<_> = handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
        for (k, v) in &written {
            assert_eq!(cache.get(k).as_ref(), Some(v));
        }
        assert_eq!(cache.stats().unwrap().entries, 200);
    }

    #[test]
    fn concurrent_identical_puts_converge() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(TagCache::open(dir.path()).unwrap());
        let (k, v) = value(&config(b"a"), "same");
        let hs: Vec<_> = (0..8)
            .map(|_| {
                let (cache, k, v) = (cache.clone(), k, v.clone());
                std::thread::spawn(move || cache.put(&k, &v).unwrap())
            })
            .collect();
        hs.into_iter().for_each(|h| h.join().unwrap());
        assert_eq!(cache.stats().unwrap().entries, 1);
        assert_eq!(cache.get(&k), Some(v));
    }

    #[test]
    fn gc_prunes_to_budget() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TagCache::open(dir.path()).unwrap();
        let cfg = config(b"a");
        for i in 0..5 {
            let (k, v) = value(&cfg, &format!("entry {i}"));
            cache.put(&k, &v).unwrap();
        }
        let before = cache.stats().unwrap();
        let report = cache.gc(before.bytes / 2).unwrap();
        assert!(report.removed >= 2);
        assert!(report.remaining_bytes <= before.bytes / 2);
        assert_eq!(cache.stats().unwrap().bytes, report.remaining_bytes);
        assert_eq!(cache.gc(u64::MAX).unwrap().removed, 0);
    }
}
