use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::document::{Document, Outcome, Verdict};
use crate::error::{Error, Result};

/// Bucket for documents without a label.
pub const OTHER: &str = "other";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceKey {
    #[default]
    Category,
    Lang,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceMode {
    /// Keep each document with probability `p_c <= 1`.
    #[default]
    Downsample,
    /// Emit each document `floor(w_c)` or `ceil(w_c)` times, `w_c >= 1`.
    Upsample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceConfig {
    pub key: BalanceKey,
    pub mode: BalanceMode,
    /// Label → target fraction; must sum to 1.
    pub targets: BTreeMap<String, f64>,
    pub seed: u64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            key: BalanceKey::Lang,
            mode: BalanceMode::Downsample,
            targets: [("en".to_string(), 0.5), ("zh".to_string(), 0.5)].into_iter().collect(),
            seed: 0,
        }
    }
}

impl BalanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::config("balance targets are empty"));
        }
        if let Some((k, v)) = self.targets.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::config(format!("balance target {k}={v} outside [0, 1]")));
        }
        let sum: f64 = self.targets.values().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::config(format!("balance targets sum to {sum}, expected 1")));
        }
        Ok(())
    }

    pub fn label_of<'a>(&self, doc: &'a Document) -> &'a str {
        let label = match self.key {
            BalanceKey::Category => doc.category.as_deref(),
            BalanceKey::Lang => doc.lang.as_deref(),
        };
        label.unwrap_or(OTHER)
    }
}

/// Per-label counts and the selection weight derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancePlan {
    pub counts: BTreeMap<String, u64>,
    /// Keep probability (downsample) or expected emission count (upsample).
    pub weights: BTreeMap<String, f64>,
    /// Output size the weights aim at, `N_out`.
    pub target_total: f64,
}

impl BalancePlan {
    /// Expected output count per label, `n_c · w_c`.
    pub fn expected(&self) -> BTreeMap<String, f64> {
        self.counts
            .iter()
            .map(|(k, n)| (k.clone(), *n as f64 * self.weights.get(k).copied().unwrap_or(0.0)))
            .collect()
    }
}

/// Solves for per-label weights.
///
/// Downsample: `N_out = min_c n_c / t_c` over labels with `t_c > 0`, and
/// `p_c = t_c · N_out / n_c`, so no label needs more documents than it has.
/// Upsample: `N_out = max_c n_c / t_c` and `w_c = t_c · N_out / n_c >= 1`.
pub fn plan_balance(counts: &BTreeMap<String, u64>, cfg: &BalanceConfig) -> Result<BalancePlan> {
    cfg.validate()?;
    if let Some(label) = counts.keys().find(|k| !cfg.targets.contains_key(*k)) {
        return Err(Error::config(format!("label {label:?} has documents but no balance target")));
    }
    let count = |k: &str| counts.get(k).copied().unwrap_or(0);
    let positive: Vec<(&String, f64)> = cfg
        .targets
        .iter()
        .filter(|(_, t)| **t > 0.0)
        .map(|(k, t)| (k, *t))
        .collect();
    if cfg.mode == BalanceMode::Downsample {
        if let Some((k, _)) = positive.iter().find(|(k, _)| count(k) == 0) {
            return Err(Error::config(format!(
                "balance target {k:?} has no documents; unreachable without upsampling"
            )));
        }
    }
    let ratios = positive
        .iter()
        .filter(|(k, _)| count(k) > 0)
        .map(|(k, t)| count(k) as f64 / t);
    let target_total = match cfg.mode {
        BalanceMode::Downsample => ratios.fold(f64::INFINITY, f64::min),
        BalanceMode::Upsample => ratios.fold(0.0, f64::max),
    };
    let target_total = if target_total.is_finite() { target_total } else { 0.0 };
    let weights = counts
        .iter()
        .map(|(k, &n)| {
            let t = cfg.targets[k];
            let w = if n == 0 { 0.0 } else { t * target_total / n as f64 };
            let w = match cfg.mode {
                BalanceMode::Downsample => w.min(1.0),
                BalanceMode::Upsample => w,
            };
            (k.clone(), w)
        })
        .collect();
    Ok(BalancePlan {
        counts: counts.clone(),
        weights,
        target_total,
    })
}

/// Uniform draw in `[0, 1)` from the document id and seed.
pub fn selection_draw(doc_id: &str, seed: u64) -> f64 {
    (xxh3_64_with_seed(doc_id.as_bytes(), seed) >> 11) as f64 / (1u64 << 53) as f64
}

/// Rebalances the corpus toward the configured label fractions.
///
/// Each document's fate depends only on its id, the seed and its label's
/// weight, so the result does not depend on input order. Downsampled
/// documents are dropped with `balance_downsample`; upsampled documents get
/// a `repeat` count.
pub fn balance_categories(docs: Vec<Document>, cfg: &BalanceConfig) -> Result<(Vec<Outcome>, BalancePlan)> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for d in &docs {
        *counts.entry(cfg.label_of(d).to_string()).or_default() += 1;
    }
    let plan = plan_balance(&counts, cfg)?;
    let outcomes = docs
        .into_iter()
        .map(|mut doc| {
            let w = plan.weights[cfg.label_of(&doc)];
            let u = selection_draw(&doc.doc_id, cfg.seed);
            match cfg.mode {
                BalanceMode::Downsample => {
                    if u < w {
                        Outcome::new(doc, Verdict::keep())
                    } else {
                        Outcome::new(doc, Verdict::drop("balance_downsample"))
                    }
                }
                BalanceMode::Upsample => {
                    let whole = w.floor();
                    let repeat = whole as u32 + u32::from(u < w - whole);
                    if repeat == 0 {
                        Outcome::new(doc, Verdict::drop("balance_downsample"))
                    } else if repeat == 1 {
                        Outcome::new(doc, Verdict::keep())
                    } else {
                        doc.repeat = Some(repeat);
                        Outcome::new(doc, Verdict::keep().with_flag("upsampled")).with_note(format!("repeat={repeat}"))
                    }
                }
            }
        })
        .collect();
    Ok((outcomes, plan))
}
