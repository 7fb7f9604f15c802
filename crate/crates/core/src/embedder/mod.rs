//! Sentence embeddings: unit-norm vectors from an embedding endpoint, backed
//! by a persistent content-addressed cache.

mod cache;
mod http;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use cache::{cache_key, CacheError, CacheKey, VectorCache};
pub use http::HttpEmbedEndpoint;

use crate::endpoint::EndpointError;
use crate::retry::RetryPolicy;
use crate::textproc::{self, SentenceList};

/// Encoder used when a run does not name one.
pub const DEFAULT_EMBEDDER_ID: &str = "GTE-Large-8152";
pub const DEFAULT_EMBED_DIM: usize = 1024;
pub const BATCH_SIZE: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid embedding: {0}")]
    InvalidVector(String),
    #[error("embedding endpoint unavailable after {attempts} attempts: {source}")]
    EndpointUnavailable { attempts: u32, source: EndpointError },
    #[error("embedding endpoint returned {found} vectors for {expected} inputs")]
    CountMismatch { expected: usize, found: usize },
    #[error("cache opened for model `{cache}` but endpoint serves `{endpoint}`")]
    ModelMismatch { cache: String, endpoint: String },
    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// A unit-norm vector. Values live in f64 for arithmetic; vectors that come
/// from an endpoint or the cache carry exactly f32-representable values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Normalize `raw` to unit length.
    pub fn unit(raw: &[f64]) -> Result<Self, EmbedError> {
        if raw.is_empty() {
            return Err(EmbedError::InvalidVector("zero-length vector".into()));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::InvalidVector("non-finite entry".into()));
        }
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(EmbedError::InvalidVector("vector has zero norm".into()));
        }
        Ok(EmbeddingVector { values: raw.iter().map(|v| v / norm).collect() })
    }

    /// Normalize an endpoint vector and round it to the f32 storage format,
    /// so a fresh vector equals its cached copy bit for bit.
    pub fn from_endpoint(raw: &[f32]) -> Result<Self, EmbedError> {
        let wide: Vec<f64> = raw.iter().map(|&v| f64::from(v)).collect();
        let mut v = Self::unit(&wide)?;
        for x in &mut v.values {
            *x = f64::from(*x as f32);
        }
        Ok(v)
    }

    /// Wrap values read back from storage; they are already normalized.
    pub fn from_stored(stored: &[f32]) -> Self {
        EmbeddingVector { values: stored.iter().map(|&v| f64::from(v)).collect() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }
}

/// The sentence vectors describing one sample; empty for an empty description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub sample_id: String,
    pub model_id: String,
    pub vectors: Vec<EmbeddingVector>,
}

impl EmbeddingSet {
    pub fn new(sample_id: impl Into<String>, model_id: impl Into<String>, vectors: Vec<EmbeddingVector>) -> Self {
        EmbeddingSet { sample_id: sample_id.into(), model_id: model_id.into(), vectors }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.vectors.first().map(EmbeddingVector::dim)
    }
}

/// How a description becomes an embedding set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// One vector per sentence of `split(text)`.
    #[default]
    SplitMax,
    /// The whole trimmed description as a single vector.
    WholeText,
}

impl SplitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitMode::SplitMax => "split-max",
            SplitMode::WholeText => "whole-text",
        }
    }

    /// The texts to embed for `text` under this mode.
    pub fn units(self, text: &str) -> Vec<String> {
        match self {
            SplitMode::SplitMax => textproc::split(text).into_vec(),
            SplitMode::WholeText => {
                let t = text.trim();
                if t.is_empty() {
                    Vec::new()
                } else {
                    vec![t.to_string()]
                }
            }
        }
    }
}

impl std::str::FromStr for SplitMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "split-max" | "split" => Ok(SplitMode::SplitMax),
            "whole-text" | "whole" => Ok(SplitMode::WholeText),
            other => Err(format!("unknown split mode `{other}` (expected split-max or whole-text)")),
        }
    }
}

impl std::fmt::Display for SplitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A text-embedding service. One call embeds a batch, in input order.
pub trait EmbedEndpoint: Send + Sync {
    fn model_id(&self) -> &str;
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EndpointError>;
}

pub struct Embedder {
    endpoint: Arc<dyn EmbedEndpoint>,
    cache: VectorCache,
    expected_dim: Option<usize>,
    retry: RetryPolicy,
    batch_size: usize,
    workers: usize,
    calls: AtomicUsize,
}

impl std::fmt::Debug for Embedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Embedder")
            .field("model_id", &self.endpoint.model_id())
            .field("cache", &self.cache)
            .field("expected_dim", &self.expected_dim)
            .finish()
    }
}

impl Embedder {
    pub fn new(endpoint: Arc<dyn EmbedEndpoint>, cache: VectorCache) -> Result<Self, EmbedError> {
        if cache.model_id() != endpoint.model_id() {
            return Err(EmbedError::ModelMismatch {
                cache: cache.model_id().to_string(),
                endpoint: endpoint.model_id().to_string(),
            });
        }
        Ok(Embedder {
            expected_dim: cache.dim(),
            endpoint,
            cache,
            retry: RetryPolicy::default(),
            batch_size: BATCH_SIZE,
            workers: 1,
            calls: AtomicUsize::new(0),
        })
    }

    /// Require every vector to have `dim` entries.
    pub fn with_dim(mut self, dim: usize) -> Result<Self, EmbedError> {
        if let Some(found) = self.cache.dim().filter(|&d| d != dim) {
            return Err(EmbedError::DimensionMismatch { expected: dim, found });
        }
        self.expected_dim = Some(dim);
        Ok(self)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    pub fn with_workers(mut self, n: usize) -> Self {
        self.workers = n.max(1);
        self
    }

    pub fn model_id(&self) -> &str {
        self.endpoint.model_id()
    }

    pub fn cache(&self) -> &VectorCache {
        &self.cache
    }

    /// Number of endpoint requests issued so far (retries included).
    pub fn network_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Embed each text, consulting the cache before any network call.
    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let model = self.endpoint.model_id();
        let keys: Vec<CacheKey> = texts.iter().map(|t| cache_key(model, t)).collect();

        let mut seen = std::collections::HashSet::new();
        let misses: Vec<(CacheKey, &String)> = keys
            .iter()
            .zip(texts)
            .filter(|(k, _)| !self.cache.contains(k) && seen.insert(**k))
            .map(|(k, t)| (*k, t))
            .collect();

        let mut fresh: HashMap<CacheKey, EmbeddingVector> = HashMap::new();
        let batches: Vec<&[(CacheKey, &String)]> = misses.chunks(self.batch_size).collect();
        for group in batches.chunks(self.workers) {
            let results: Vec<Result<Vec<EmbeddingVector>, EmbedError>> = if group.len() == 1 {
                vec![self.fetch(group[0])]
            } else {
                std::thread::scope(|s| {
                    let handles: Vec<_> = group.iter().map(|b| s.spawn(|| self.fetch(b))).collect();
                    handles.into_iter().map(|h| h.join().expect("embedding worker panicked")).collect()
                })
            };
            // Store in canonical order so the cache files do not depend on scheduling.
            for (batch, result) in group.iter().zip(results) {
                for ((key, _), vector) in batch.iter().zip(result?) {
                    self.cache.put(key, &vector.to_f32())?;
                    fresh.insert(*key, vector);
                }
            }
        }

        keys.iter()
            .map(|k| match fresh.get(k) {
                Some(v) => Ok(v.clone()),
                None => {
                    let stored = self.cache.get(k)?.expect("key was cached before this call");
                    self.check_dim(stored.len())?;
                    Ok(EmbeddingVector::from_stored(&stored))
                }
            })
            .collect()
    }

    fn fetch(&self, batch: &[(CacheKey, &String)]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let texts: Vec<String> = batch.iter().map(|(_, t)| (*t).clone()).collect();
        let (raw, _) = self
            .retry
            .run(
                || {
                    self.calls.fetch_add(1, Ordering::SeqCst);
                    self.endpoint.embed_batch(&texts)
                },
                EndpointError::is_transient,
            )
            .map_err(|(source, attempts)| EmbedError::EndpointUnavailable { attempts, source })?;
        if raw.len() != texts.len() {
            return Err(EmbedError::CountMismatch { expected: texts.len(), found: raw.len() });
        }
        raw.iter()
            .map(|v| {
                self.check_dim(v.len())?;
                EmbeddingVector::from_endpoint(v)
            })
            .collect()
    }

    fn check_dim(&self, found: usize) -> Result<(), EmbedError> {
        match self.expected_dim.or(self.cache.dim()) {
            Some(expected) if expected != found => Err(EmbedError::DimensionMismatch { expected, found }),
            _ => Ok(()),
        }
    }

    pub fn embed_sentences(&self, sample_id: &str, sentences: &SentenceList) -> Result<EmbeddingSet, EmbedError> {
        let vectors = self.embed_texts(sentences.as_slice())?;
        Ok(EmbeddingSet::new(sample_id, self.model_id(), vectors))
    }

    /// The ablation without sentence splitting: one vector for the whole text.
    pub fn embed_whole_text(&self, sample_id: &str, text: &str) -> Result<EmbeddingSet, EmbedError> {
        let vectors = self.embed_texts(&SplitMode::WholeText.units(text))?;
        Ok(EmbeddingSet::new(sample_id, self.model_id(), vectors))
    }

    /// Embed many descriptions at once, batching sentences across samples.
    pub fn embed_descriptions(
        &self,
        docs: &[(String, String)],
        mode: SplitMode,
    ) -> Result<Vec<EmbeddingSet>, EmbedError> {
        let units: Vec<Vec<String>> = docs.iter().map(|(_, text)| mode.units(text)).collect();
        let flat: Vec<String> = units.iter().flatten().cloned().collect();
        let mut vectors = self.embed_texts(&flat)?.into_iter();
        Ok(docs
            .iter()
            .zip(&units)
            .map(|((id, _), u)| {
                EmbeddingSet::new(id.as_str(), self.model_id(), vectors.by_ref().take(u.len()).collect())
            })
            .collect())
    }
}
