//! Model-backed gates (page type, line clutter, quality) and corpus balancing.
//!
//! Each model sits behind a provider trait. The built-in providers in
//! [`heuristics`] are deterministic stand-ins; remote models plug in through
//! the same traits.

mod balance;
pub mod heuristics;

pub use balance::{
    balance_categories, plan_balance, BalanceConfig, BalanceKey, BalanceMode, BalancePlan,
};
pub use heuristics::{HeuristicClutterScorer, HeuristicQualityScorer, HeuristicWebType, KeywordCategoryClassifier};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::document::{Document, Outcome, Verdict};
use crate::error::{Error, ProviderError, Result};
use crate::provider::RetryPolicy;
use crate::text::{is_content_line, raw_lines};

pub const DETAIL_PAGE: &str = "detail_page";

/// Labels a page as `detail_page`, `tool`, `audio`, `video`, `forum`, `adult`, ...
pub trait WebTypeProvider: Send + Sync {
    fn classify(&self, doc: &Document) -> Result<String, ProviderError>;
}

/// Scores each line of a document in `[0, 1]`; low means clutter.
pub trait LineScorer: Send + Sync {
    fn score_lines(&self, lines: &[&str]) -> Result<Vec<f64>, ProviderError>;
}

/// Scores a whole document in `[0, 1]`.
pub trait QualityScorer: Send + Sync {
    fn score(&self, text: &str) -> Result<f64, ProviderError>;
}

/// Assigns one label from a declared label set.
pub trait CategoryClassifier: Send + Sync {
    fn labels(&self) -> Vec<String>;
    fn classify(&self, doc: &Document) -> Result<String, ProviderError>;
}

/// Keeps only detail pages.
pub fn gate_web_type(doc: &Document, provider: &dyn WebTypeProvider, retry: &RetryPolicy) -> Verdict {
    match retry.run(|| provider.classify(doc)) {
        Ok(label) if label == DETAIL_PAGE => Verdict::keep(),
        Ok(label) => Verdict::drop(format!("webtype_{label}")),
        Err(_) => Verdict::drop("webtype_error"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClutterConfig {
    pub threshold: f64,
    pub retry: RetryPolicy,
}

impl Default for ClutterConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            retry: RetryPolicy::default(),
        }
    }
}

impl ClutterConfig {
    pub fn validate(&self) -> Result<()> {
        check_unit("clutter threshold", self.threshold)
    }
}

fn check_unit(what: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(format!("{what} {v} outside [0, 1]")))
    }
}

/// Removes lines scoring below the threshold, keeping the rest in order.
///
/// A document with no content line left is dropped as `emptied`. If the
/// scorer keeps failing the document passes through untouched with the
/// `clutter_error` flag.
pub fn remove_clutter_lines(mut doc: Document, scorer: &dyn LineScorer, cfg: &ClutterConfig) -> Outcome {
    let lines: Vec<&str> = raw_lines(&doc.text).collect();
    let scores = match cfg.retry.run(|| scorer.score_lines(&lines)) {
        Ok(s) if s.len() == lines.len() => s,
        _ => return Outcome::new(doc, Verdict::keep().with_flag("clutter_error")),
    };
    let kept: Vec<&str> = lines
        .iter()
        .zip(&scores)
        .filter(|(_, s)| **s >= cfg.threshold)
        .map(|(l, _)| *l)
        .collect();
    let removed = lines.len() - kept.len();
    if removed == 0 {
        return Outcome::new(doc, Verdict::keep());
    }
    if !kept.iter().any(|l| is_content_line(l)) {
        return Outcome::new(doc, Verdict::drop("emptied"));
    }
    doc.text = kept.join("\n");
    Outcome::new(doc, Verdict::keep().with_flag("clutter_removed")).with_note(format!("lines_removed={removed}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityConfig {
    pub threshold: f64,
    pub retry: RetryPolicy,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            retry: RetryPolicy::default(),
        }
    }
}

impl QualityConfig {
    pub fn validate(&self) -> Result<()> {
        check_unit("quality threshold", self.threshold)
    }
}

/// Records the score on `doc` and keeps it iff `score >= threshold`.
pub fn gate_quality(doc: &mut Document, scorer: &dyn QualityScorer, cfg: &QualityConfig) -> Verdict {
    match cfg.retry.run(|| scorer.score(&doc.text)) {
        Ok(score) => {
            let score = score.clamp(0.0, 1.0);
            doc.quality = Some(score);
            if score >= cfg.threshold {
                Verdict::keep()
            } else {
                Verdict::drop("low_quality")
            }
        }
        Err(_) => Verdict::drop("quality_error"),
    }
}

/// Labels every document with a category (in parallel). Classifier failures
/// and labels outside the declared set become `other`.
pub fn label_categories(docs: &mut [Document], classifier: &dyn CategoryClassifier, retry: &RetryPolicy) {
    let allowed = classifier.labels();
    docs.par_iter_mut().for_each(|doc| {
        let label = retry
            .run(|| classifier.classify(doc))
            .ok()
            .filter(|l| allowed.contains(l))
            .unwrap_or_else(|| balance::OTHER.to_string());
        doc.category = Some(label);
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(&'static str);
    impl WebTypeProvider for Fixed {
        fn classify(&self, _: &Document) -> Result<String, ProviderError> {
            Ok(self.0.to_string())
        }
    }

    struct Failing;
    impl WebTypeProvider for Failing {
        fn classify(&self, _: &Document) -> Result<String, ProviderError> {
            Err(ProviderError::retryable("down"))
        }
    }
    impl QualityScorer for Failing {
        fn score(&self, _: &str) -> Result<f64, ProviderError> {
            Err(ProviderError::retryable("down"))
        }
    }

    struct Score(f64);
    impl QualityScorer for Score {
        fn score(&self, _: &str) -> Result<f64, ProviderError> {
            Ok(self.0)
        }
    }

    /// Lines starting with `nav` score 0.1, everything else 1.0.
    struct NavLines;
    impl LineScorer for NavLines {
        fn score_lines(&self, lines: &[&str]) -> Result<Vec<f64>, ProviderError> {
            Ok(lines.iter().map(|l| if l.starts_with("nav") { 0.1 } else { 1.0 }).collect())
        }
    }

    fn doc(text: &str) -> Document {
        Document::new("d", 0, text)
    }

    #[test]
    fn web_type_gate() {
        let r = RetryPolicy::no_wait(2);
        assert!(gate_web_type(&doc("x"), &Fixed("detail_page"), &r).keep);
        let v = gate_web_type(&doc("x"), &Fixed("adult"), &r);
        assert_eq!(v.primary_reason(), Some("webtype_adult"));
        assert_eq!(gate_web_type(&doc("x"), &Failing, &r).primary_reason(), Some("webtype_error"));
    }

    #[test]
    fn clutter_removal_keeps_order() {
        let lines: Vec<String> = (0..10)
            .map(|i| if [1, 4, 5, 8].contains(&i) { format!("nav {i}") } else { format!("line {i}") })
            .collect();
        let out = remove_clutter_lines(doc(&lines.join("\n")), &NavLines, &ClutterConfig::default());
        assert!(out.verdict.keep);
        assert_eq!(out.doc.text, "line 0\nline 2\nline 3\nline 6\nline 7\nline 9");
        assert_eq!(out.note.as_deref(), Some("lines_removed=4"));
    }

    #[test]
    fn clutter_untouched_and_emptied() {
        let out = remove_clutter_lines(doc("a\nb"), &NavLines, &ClutterConfig::default());
        assert_eq!(out.doc.text, "a\nb");
        assert!(out.verdict.flags.is_empty());
        let out = remove_clutter_lines(doc("nav one\nnav two"), &NavLines, &ClutterConfig::default());
        assert_eq!(out.verdict.primary_reason(), Some("emptied"));
    }

    #[test]
    fn quality_gate_keeps_on_equal() {
        let cfg = QualityConfig { threshold: 0.7, retry: RetryPolicy::no_wait(1) };
        let mut d = doc("x");
        assert!(gate_quality(&mut d, &Score(0.9), &cfg).keep);
        assert_eq!(d.quality, Some(0.9));
        assert!(!gate_quality(&mut d, &Score(0.69), &cfg).keep);
        assert!(gate_quality(&mut d, &Score(0.7), &cfg).keep);
        assert_eq!(gate_quality(&mut d, &Failing, &cfg).primary_reason(), Some("quality_error"));
    }
}
