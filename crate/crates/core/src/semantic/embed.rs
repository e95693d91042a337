use std::collections::{HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64;

use crate::error::{Error, ProviderError, Result};
use crate::exact::DocumentDigest;
use crate::provider::RetryPolicy;

/// A unit-norm embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    /// Scales `values` to unit L2 norm. Fails on zero or non-finite input.
    pub fn normalized(values: Vec<f32>) -> Result<Self, ProviderError> {
        let norm = values.iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(ProviderError::fatal("embedding has zero or non-finite norm"));
        }
        Ok(Self {
            values: values.into_iter().map(|v| (v as f64 / norm) as f32).collect(),
        })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt()
    }

    /// Cosine similarity of unit vectors: the dot product, accumulated in f32
    /// up to 4096 dimensions and in f64 beyond.
    pub fn cosine(&self, other: &EmbeddingVector) -> f32 {
        debug_assert_eq!(self.dim(), other.dim());
        if self.dim() <= 4096 {
            self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
        } else {
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| *a as f64 * *b as f64)
                .sum::<f64>() as f32
        }
    }
}

impl AsRef<[f32]> for EmbeddingVector {
    fn as_ref(&self) -> &[f32] {
        &self.values
    }
}

pub trait EmbeddingProvider: Send + Sync {
    /// Largest batch the provider accepts.
    fn max_batch(&self) -> usize;
    /// Raw (not necessarily normalized) vectors, one per input, in order.
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub max_batch: usize,
    /// Batches in flight at once.
    pub in_flight: usize,
    pub retry: RetryPolicy,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            max_batch: 64,
            in_flight: 4,
            retry: RetryPolicy::default(),
        }
    }
}

/// Embeds `texts` in provider-sized batches, normalizing every vector.
///
/// Transport failures are retried per `cfg.retry`, after which the whole
/// call fails. All vectors must share one dimension.
pub fn embed_batch(
    texts: &[&str],
    provider: &dyn EmbeddingProvider,
    cfg: &EmbedConfig,
) -> Result<Vec<EmbeddingVector>> {
    let batch = cfg.max_batch.min(provider.max_batch()).max(1);
    let batches: Vec<&[&str]> = texts.chunks(batch).collect();
    let mut out = Vec::with_capacity(texts.len());
    for window in batches.chunks(cfg.in_flight.max(1)) {
        let results: Vec<Result<Vec<Vec<f32>>, ProviderError>> = window
            .par_iter()
            .map(|chunk| {
                let raw = cfg.retry.run(|| provider.embed(chunk))?;
                if raw.len() != chunk.len() {
                    return Err(ProviderError::fatal(format!(
                        "provider returned {} vectors for {} texts",
                        raw.len(),
                        chunk.len()
                    )));
                }
                Ok(raw)
            })
            .collect();
        for r in results {
            for v in r? {
                out.push(EmbeddingVector::normalized(v)?);
            }
        }
    }
    if let Some(first) = out.first() {
        let dim = first.dim();
        if let Some(bad) = out.iter().find(|v| v.dim() != dim) {
            return Err(Error::Stage {
                stage: "semantic_dedup".into(),
                message: format!("embedding dimension changed from {dim} to {}", bad.dim()),
            });
        }
    }
    Ok(out)
}

/// Deterministic stand-in for an embedding model.
///
/// Each text maps to a seeded Gaussian direction. With `collapse_duplicates`
/// the key is the digest of the normalized text, so normalized-equal texts
/// get identical vectors; otherwise the key is a hash of the raw bytes.
#[derive(Debug, Clone)]
pub struct MockEmbeddingProvider {
    pub dim: usize,
    pub seed: u64,
    pub collapse_duplicates: bool,
}

impl MockEmbeddingProvider {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            collapse_duplicates: true,
        }
    }

    fn key(&self, text: &str) -> u64 {
        if self.collapse_duplicates {
            let d = DocumentDigest::of_text(text);
            u64::from_le_bytes(d.bytes()[..8].try_into().expect("8 bytes"))
        } else {
            xxh3_64(text.as_bytes())
        }
    }

    pub fn vector(&self, text: &str) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ self.key(text));
        (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    }
}

impl EmbeddingProvider for MockEmbeddingProvider {
    fn max_batch(&self) -> usize {
        256
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, ProviderError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// On-disk vector cache keyed by document digest.
///
/// Stored as an append-only `vectors.bin` of
/// `digest [16] | dim u32 LE | dim × f32 LE` records.
#[derive(Debug)]
pub struct EmbeddingCache {
    path: PathBuf,
    vectors: HashMap<DocumentDigest, EmbeddingVector>,
    pending: Vec<(DocumentDigest, EmbeddingVector)>,
}

impl EmbeddingCache {
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("vectors.bin");
        let mut vectors = HashMap::new();
        if path.exists() {
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let bad = || Error::format(&path, "truncated vector record");
            let mut rest = bytes.as_slice();
            while !rest.is_empty() {
                if rest.len() < 20 {
                    return Err(bad());
                }
                let digest: [u8; 16] = rest[..16].try_into().expect("16");
                let dim = u32::from_le_bytes(rest[16..20].try_into().expect("4")) as usize;
                let body = rest.get(20..20 + dim * 4).ok_or_else(bad)?;
                let values = body
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4")))
                    .collect();
                vectors.insert(DocumentDigest::from_bytes(digest), EmbeddingVector { values });
                rest = &rest[20 + dim * 4..];
            }
        }
        Ok(Self {
            path,
            vectors,
            pending: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, digest: &DocumentDigest) -> Option<&EmbeddingVector> {
        self.vectors.get(digest)
    }

    pub fn insert(&mut self, digest: DocumentDigest, v: EmbeddingVector) {
        if let std::collections::hash_map::Entry::Vacant(e) = self.vectors.entry(digest) {
            e.insert(v.clone());
            self.pending.push((digest, v));
        }
    }

    pub fn flush(&mut self) -> Result<()> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for (d, v) in self.pending.drain(..) {
            buf.extend_from_slice(d.bytes());
            buf.extend_from_slice(&(v.dim() as u32).to_le_bytes());
            for x in v.values() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .and_then(|mut f| f.write_all(&buf))
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Embeds texts, serving digests already in `cache` from disk and adding
/// the rest to it.
pub fn embed_with_cache(
    texts: &[&str],
    provider: &dyn EmbeddingProvider,
    cfg: &EmbedConfig,
    cache: &mut EmbeddingCache,
) -> Result<Vec<EmbeddingVector>> {
    let digests: Vec<DocumentDigest> = texts.par_iter().map(|t| DocumentDigest::of_text(t)).collect();
    let mut seen = HashSet::new();
    let missing: Vec<usize> = (0..texts.len())
        .filter(|&i| cache.get(&digests[i]).is_none() && seen.insert(digests[i]))
        .collect();
    let fresh_texts: Vec<&str> = missing.iter().map(|&i| texts[i]).collect();
    let fresh = embed_batch(&fresh_texts, provider, cfg)?;
    for (&i, v) in missing.iter().zip(fresh) {
        cache.insert(digests[i], v);
    }
    cache.flush()?;
    Ok(digests
        .iter()
        .map(|d| cache.get(d).expect("cached above").clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn mock_is_deterministic_and_unit_norm() {
        let p = MockEmbeddingProvider::new(32, 1);
        let cfg = EmbedConfig::default();
        let v = embed_batch(&["same text", "same text", "other"], &p, &cfg).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v[0], v[1]);
        assert_ne!(v[0], v[2]);
        for x in &v {
            assert!((x.norm() - 1.0).abs() < 1e-5);
            assert_eq!(x.dim(), 32);
        }
    }

    #[test]
    fn collapse_mode_maps_normalized_equal_texts_together() {
        let mut p = MockEmbeddingProvider::new(16, 3);
        assert_eq!(p.vector("Hello, World!"), p.vector("hello world"));
        p.collapse_duplicates = false;
        assert_ne!(p.vector("Hello, World!"), p.vector("hello world"));
    }

    #[test]
    fn batches_preserve_order() {
        let p = MockEmbeddingProvider::new(8, 0);
        let texts: Vec<String> = (0..10).map(|i| format!("text {i}")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let cfg = EmbedConfig { max_batch: 3, in_flight: 2, ..Default::default() };
        let batched = embed_batch(&refs, &p, &cfg).unwrap();
        for (t, v) in refs.iter().zip(&batched) {
            assert_eq!(*v, EmbeddingVector::normalized(p.vector(t)).unwrap());
        }
    }

    struct Flaky {
        failures: AtomicUsize,
    }

    impl EmbeddingProvider for Flaky {
        fn max_batch(&self) -> usize {
            8
        }
        fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, ProviderError> {
            if self.failures.fetch_sub(1, Ordering::SeqCst) > 0 {
                return Err(ProviderError::retryable("connection reset"));
            }
            Ok(texts.iter().map(|_| vec![1.0, 0.0]).collect())
        }
    }

    #[test]
    fn transport_failures_are_retried_then_fatal() {
        let cfg = EmbedConfig { retry: RetryPolicy::no_wait(3), ..Default::default() };
        let ok = Flaky { failures: AtomicUsize::new(2) };
        assert_eq!(embed_batch(&["a"], &ok, &cfg).unwrap().len(), 1);
        let down = Flaky { failures: AtomicUsize::new(10) };
        assert!(matches!(embed_batch(&["a"], &down, &cfg), Err(Error::Provider(_))));
    }

    struct Shifting;
    impl EmbeddingProvider for Shifting {
        fn max_batch(&self) -> usize {
            1
        }
        fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, ProviderError> {
            Ok(texts.iter().map(|t| vec![1.0; t.len()]).collect())
        }
    }

    #[test]
    fn dimension_change_is_fatal() {
        let err = embed_batch(&["ab", "abc"], &Shifting, &EmbedConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Stage { .. }));
    }

    #[test]
    fn cache_serves_repeat_runs() {
        let dir = tempfile::tempdir().unwrap();
        let p = MockEmbeddingProvider::new(8, 0);
        let cfg = EmbedConfig::default();
        let mut cache = EmbeddingCache::open(dir.path()).unwrap();
        let first = embed_with_cache(&["a b", "c d", "A, b"], &p, &cfg, &mut cache).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(first[0], first[2]);

        let mut reopened = EmbeddingCache::open(dir.path()).unwrap();
        assert_eq!(reopened.len(), 2);
        let failing = Flaky { failures: AtomicUsize::new(usize::MAX) };
        let again = embed_with_cache(&["c d", "a b"], &failing, &cfg, &mut reopened).unwrap();
        assert_eq!(again[0], first[1]);
        assert_eq!(again[1], first[0]);
    }
}
