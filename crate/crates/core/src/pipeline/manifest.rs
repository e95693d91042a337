use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::StageKind;
use crate::document::StageStats;
use crate::error::{Error, Result};

/// Record of one stage run.
///
/// Everything here is a function of the input bytes, the stage
/// configuration and the seed, so reruns produce identical files. Wall time
/// lives in a separate [`StageTiming`] file for that reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    #[serde(flatten)]
    pub stats: StageStats,
    /// SHA-256 of the input file bytes.
    pub input_checksum: String,
    /// SHA-256 of the output file bytes.
    pub output_checksum: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, Value>,
}

impl StageManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub wall_time_ms: u128,
    pub workers: usize,
}

pub const TIMING_SUFFIX: &str = ".timing.json";

/// Every `*.json` manifest in `dir` (timing files excluded), by file name.
pub fn load_manifests(dir: &Path) -> Result<Vec<StageManifest>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if name.ends_with(".json") && !name.ends_with(TIMING_SUFFIX) {
            paths.push(path);
        }
    }
    paths.sort();
    paths.iter().map(|p| StageManifest::load(p)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelRow {
    pub stage: String,
    pub docs_in: u64,
    pub docs_out: u64,
    pub dropped: u64,
    /// `1 - docs_out / docs_in`, reported for deduplication stages.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dedup_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub funnel: Vec<FunnelRow>,
    /// Drops summed over all stages, by reason.
    pub drops_by_reason: BTreeMap<String, u64>,
    pub docs_in: u64,
    pub docs_out: u64,
    pub manifests: Vec<StageManifest>,
}

pub fn build_report(manifests: &[StageManifest]) -> Report {
    let mut drops_by_reason: BTreeMap<String, u64> = BTreeMap::new();
    let funnel = manifests
        .iter()
        .map(|m| {
            for (r, n) in &m.stats.drops {
                *drops_by_reason.entry(r.clone()).or_default() += n;
            }
            let is_dedup = m.stage.parse::<StageKind>().is_ok_and(StageKind::is_dedup);
            FunnelRow {
                stage: m.stage.clone(),
                docs_in: m.stats.docs_in,
                docs_out: m.stats.docs_out,
                dropped: m.stats.dropped(),
                dedup_ratio: (is_dedup && m.stats.docs_in > 0)
                    .then(|| 1.0 - m.stats.docs_out as f64 / m.stats.docs_in as f64),
            }
        })
        .collect();
    Report {
        funnel,
        drops_by_reason,
        docs_in: manifests.first().map_or(0, |m| m.stats.docs_in),
        docs_out: manifests.last().map_or(0, |m| m.stats.docs_out),
        manifests: manifests.to_vec(),
    }
}

pub fn render_text(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<16} {:>10} {:>10} {:>10} {:>8}", "stage", "in", "out", "dropped", "dedup");
    for row in &report.funnel {
        let ratio = row.dedup_ratio.map_or_else(|| "-".to_string(), |r| format!("{:.2}%", r * 100.0));
        let _ = writeln!(
            out,
            "{:<16} {:>10} {:>10} {:>10} {:>8}",
            row.stage, row.docs_in, row.docs_out, row.dropped, ratio
        );
    }
    let kept = if report.docs_in == 0 {
        0.0
    } else {
        report.docs_out as f64 / report.docs_in as f64 * 100.0
    };
    let _ = writeln!(out, "\n{} of {} documents kept ({kept:.2}%)", report.docs_out, report.docs_in);
    if !report.drops_by_reason.is_empty() {
        let _ = writeln!(out, "\ndrops by reason:");
        for (reason, n) in &report.drops_by_reason {
            let _ = writeln!(out, "  {reason:<28} {n:>10}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::Verdict;

    fn manifest(stage: &str, keeps: u64, drops: &[(&str, u64)]) -> StageManifest {
        let mut stats = StageStats::default();
        for _ in 0..keeps {
            stats.record(&Verdict::keep(), 10, 10);
        }
        for (r, n) in drops {
            for _ in 0..*n {
                stats.record(&Verdict::drop(*r), 10, 0);
            }
        }
        StageManifest {
            stage: stage.into(),
            config_hash: "h".into(),
            seed: 0,
            stats,
            input_checksum: "i".into(),
            output_checksum: "o".into(),
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn conservation_from_counts() {
        let m = manifest("rule_filter", 70, &[("too_short", 20), ("symbol_to_word_ratio", 10)]);
        assert_eq!(m.stats.docs_in, 100);
        assert_eq!(m.stats.docs_out, 70);
        assert_eq!(m.stats.drops.values().sum::<u64>(), 30);
        assert!(m.stats.is_conserved());
    }

    #[test]
    fn single_manifest_single_row() {
        let r = build_report(&[manifest("langid", 3, &[("low_lang_conf", 1)])]);
        assert_eq!(r.funnel.len(), 1);
        assert_eq!(r.funnel[0].dedup_ratio, None);
        assert_eq!((r.docs_in, r.docs_out), (4, 3));
    }

    #[test]
    fn dedup_ratio_for_dedup_stages() {
        let r = build_report(&[manifest("exact_dedup", 75, &[("exact_dup", 25)])]);
        assert_eq!(r.funnel[0].dedup_ratio, Some(0.25));
        assert!(render_text(&r).contains("25.00%"));
    }

    #[test]
    fn report_json_round_trips_manifests() {
        let ms = vec![manifest("url_filter", 9, &[("url_blocklist", 1)]), manifest("exact_dedup", 8, &[("exact_dup", 1)])];
        let json = serde_json::to_string(&build_report(&ms)).unwrap();
        let back: Report = serde_json::from_str(&json).unwrap();
        assert_eq!(back.manifests, ms);
        let one: StageManifest = serde_json::from_str(&ms[0].to_json()).unwrap();
        assert_eq!(one, ms[0]);
    }
}
