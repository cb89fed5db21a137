//! Tag a list of chunks through a cache with bounded parallelism.

use serde::{Deserialize, Serialize};

use crate::cache::{CacheError, CacheKey, TagCache};
use crate::model::{Chunk, TaggedChunk};
use crate::taggers::{Tagger, TaggerCounts, TaggerError, TaggerStats};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Tagger(#[from] TaggerError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Upper bound on chunks tagged at once.
    pub max_in_flight: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self { max_in_flight: 8 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub chunks: u64,
    pub cache_hits: u64,
    pub tagged: u64,
    pub tagger: TaggerCounts,
}

#[derive(Debug)]
pub struct TagRun {
    /// One result per input chunk, in input order.
    pub results: Vec<TaggedChunk>,
    pub counts: RunCounts,
}

/// Look every chunk up in `cache`, tag the misses and store them. Taggers
/// that are not `concurrent` get all misses in a single `tag_batch` call.
pub fn tag_chunks(
    chunks: &[Chunk],
    tagger: &dyn Tagger,
    cache: Option<&TagCache>,
    opts: PipelineOptions,
) -> Result<TagRun, PipelineError> {
    let config = tagger.config();
    let keys: Vec<CacheKey> = chunks.iter().map(|c| CacheKey::for_config(config, c.hash)).collect();
    // entries are content-addressed; the stored chunk may be another
    // occurrence of the same text, so put the caller's chunk back
    let mut results: Vec<Option<TaggedChunk>> = keys
        .iter()
        .zip(chunks)
        .map(|(k, chunk)| {
            let mut hit = cache.and_then(|c| c.get(k))?;
            hit.chunk = chunk.clone();
            Some(hit)
        })
        .collect();
    let misses: Vec<usize> = (0..chunks.len()).filter(|&i| results[i].is_none()).collect();
    let cache_hits = (chunks.len() - misses.len()) as u64;

    let stats = TaggerStats::default();
    let fresh: Vec<TaggedChunk> = if misses.is_empty() {
        Vec::new()
    } else if tagger.concurrent() && opts.max_in_flight > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.max_in_flight.min(misses.len()))
            .build()
            .map_err(|e| PipelineError::Pool(e.to_string()))?;
        pool.install(|| {
            misses
                .par_iter()
                .map(|&i| tagger.tag(&chunks[i], &stats))
                .collect::<Result<Vec<_>, _>>()
        })?
    } else {
        let batch: Vec<Chunk> = misses.iter().map(|&i| chunks[i].clone()).collect();
        tagger.tag_batch(&batch, &stats)?
    };

    let tagged = fresh.len() as u64;
    for (&i, tc) in misses.iter().zip(fresh) {
        if let Some(c) = cache {
            c.put(&keys[i], &tc)?;
        }
        results[i] = Some(tc);
    }
    Ok(TagRun {
        results: results.into_iter().map(|r| r.expect("every chunk resolved")).collect(),
        counts: RunCounts {
            chunks: chunks.len() as u64,
            cache_hits,
            tagged,
            tagger: stats.snapshot(),
        },
    })
}
