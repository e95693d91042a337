//! Embedding-based near-duplicate removal.
//!
//! Documents are embedded, grouped with k-means, and within each cluster a
//! document is dropped when it is too close to one already kept.

mod embed;
mod kmeans;

pub use embed::{
    embed_batch, embed_with_cache, EmbedConfig, EmbeddingCache, EmbeddingProvider, EmbeddingVector,
    MockEmbeddingProvider,
};
pub use kmeans::{default_k, kmeans_cluster, ClusterAssignment, KMeansConfig};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::document::{Document, Outcome, Verdict};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemanticConfig {
    pub threshold: f64,
    /// Cluster count; `None` means one cluster per ~1000 documents.
    pub k: Option<usize>,
    pub seed: u64,
    pub kmeans: KMeansConfig,
    pub embed: EmbedConfig,
}

impl Default for SemanticConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            k: None,
            seed: 0,
            kmeans: KMeansConfig::default(),
            embed: EmbedConfig::default(),
        }
    }
}

impl SemanticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(Error::config(format!("semantic threshold {} outside [-1, 1]", self.threshold)));
        }
        if self.k == Some(0) {
            return Err(Error::config("semantic k must be at least 1"));
        }
        if self.embed.max_batch == 0 {
            return Err(Error::config("embedding max_batch must be positive"));
        }
        Ok(())
    }

    pub fn k_for(&self, n: usize) -> usize {
        self.k.unwrap_or_else(|| default_k(n)).min(n.max(1))
    }
}

/// Greedy keep-first removal inside each cluster.
///
/// `labels[i]` and `vectors[i]` belong to `docs[i]`. Within a cluster,
/// documents are visited in `seq` order; one is dropped with `semantic_dup`
/// when its cosine to any retained document of that cluster reaches
/// `threshold`. Clusters run in parallel and never see each other.
/// Outcomes come back in `seq` order.
pub fn dedup_semantic(
    docs: Vec<Document>,
    labels: &[usize],
    vectors: &[EmbeddingVector],
    threshold: f64,
) -> Result<Vec<Outcome>> {
    if labels.len() != docs.len() || vectors.len() != docs.len() {
        return Err(Error::Stage {
            stage: "semantic_dedup".into(),
            message: format!(
                "{} documents but {} labels and {} vectors",
                docs.len(),
                labels.len(),
                vectors.len()
            ),
        });
    }
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.sort_by_key(|&i| docs[i].seq);

    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for &i in &order {
        members[labels[i]].push(i);
    }
    let threshold = threshold as f32;

    // (doc index, Some(index it duplicates))
    let decisions: Vec<(usize, Option<usize>)> = members
        .par_iter()
        .flat_map_iter(|cluster| {
            let mut kept: Vec<usize> = Vec::new();
            let mut out = Vec::with_capacity(cluster.len());
            for &i in cluster {
                let hit = kept
                    .iter()
                    .copied()
                    .find(|&j| vectors[i].cosine(&vectors[j]) >= threshold);
                if hit.is_none() {
                    kept.push(i);
                }
                out.push((i, hit));
            }
            out
        })
        .collect();

    let mut dup_of: Vec<Option<usize>> = vec![None; docs.len()];
    for (i, hit) in decisions {
        dup_of[i] = hit;
    }
    let ids: Vec<String> = docs.iter().map(|d| d.doc_id.clone()).collect();
    let mut slots: Vec<Option<Document>> = docs.into_iter().map(Some).collect();
    Ok(order
        .into_iter()
        .map(|i| {
            let doc = slots[i].take().expect("each index once");
            match dup_of[i] {
                None => Outcome::new(doc, Verdict::keep()),
                Some(j) => Outcome::new(doc, Verdict::drop("semantic_dup"))
                    .with_note(format!("dup_of={}", ids[j])),
            }
        })
        .collect())
}

/// Embeds, clusters and deduplicates a batch of documents.
pub fn run_semantic_dedup(
    docs: Vec<Document>,
    provider: &dyn EmbeddingProvider,
    cfg: &SemanticConfig,
    cache: Option<&mut EmbeddingCache>,
) -> Result<Vec<Outcome>> {
    cfg.validate()?;
    if docs.is_empty() {
        return Ok(Vec::new());
    }
    let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    let vectors = match cache {
        Some(c) => embed_with_cache(&texts, provider, &cfg.embed, c)?,
        None => embed_batch(&texts, provider, &cfg.embed)?,
    };
    let k = cfg.k_for(docs.len());
    let assignment = kmeans_cluster(&vectors, k, cfg.seed, &cfg.kmeans)?;
    dedup_semantic(docs, &assignment.labels, &vectors, cfg.threshold)
}
