//! Language identification gate and a character-trigram baseline identifier.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::document::{Document, Verdict};
use crate::error::{Error, ProviderError, Result};
use crate::provider::RetryPolicy;
use crate::text::{is_cjk, normalize_text};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangPrediction {
    pub lang: String,
    pub confidence: f64,
}

impl LangPrediction {
    pub fn new(lang: impl Into<String>, confidence: f64) -> Self {
        Self {
            lang: lang.into(),
            confidence: confidence.clamp(0.0, 1.0),
        }
    }
}

pub trait LanguageIdProvider: Send + Sync {
    fn predict(&self, text: &str) -> Result<LangPrediction, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LangIdConfig {
    /// Documents with confidence strictly below this are dropped.
    pub threshold: f64,
    pub retry: RetryPolicy,
}

impl Default for LangIdConfig {
    fn default() -> Self {
        Self {
            threshold: 0.65,
            retry: RetryPolicy::default(),
        }
    }
}

impl LangIdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::config(format!(
                "langid threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Annotates `doc` with the predicted language and confidence and gates on it.
pub fn classify_language(
    doc: &mut Document,
    provider: &dyn LanguageIdProvider,
    cfg: &LangIdConfig,
) -> Verdict {
    if doc.text.trim().is_empty() {
        return Verdict::drop("empty");
    }
    match cfg.retry.run(|| provider.predict(&doc.text)) {
        Ok(pred) => {
            let keep = pred.confidence >= cfg.threshold;
            doc.lang = Some(pred.lang);
            doc.lang_conf = Some(pred.confidence);
            if keep {
                Verdict::keep()
            } else {
                Verdict::drop("low_lang_conf")
            }
        }
        Err(_) => Verdict::drop("langid_error"),
    }
}

const EN_SAMPLE: &str = include_str!("../data/langid_en.txt");
const ZH_SAMPLE: &str = include_str!("../data/langid_zh.txt");

type Profile = BTreeMap<String, f64>;

/// Character-trigram profile matcher for English and Chinese.
///
/// Text is normalized, CJK characters fold to one placeholder and digits to
/// `0`, then trigram counts are compared to each language profile by cosine.
/// Confidence is `margin * coverage`, where margin is `(best - second) / best`
/// and coverage is `min(1, best / saturation)`; text resembling neither
/// profile therefore scores low even when one profile wins.
#[derive(Debug, Clone)]
pub struct TrigramLanguageId {
    profiles: Vec<(String, Profile)>,
    saturation: f64,
}

impl Default for TrigramLanguageId {
    fn default() -> Self {
        Self::from_samples(&[("en", EN_SAMPLE), ("zh", ZH_SAMPLE)])
    }
}

impl TrigramLanguageId {
    pub const DEFAULT_SATURATION: f64 = 0.25;

    pub fn from_samples(samples: &[(&str, &str)]) -> Self {
        let profiles = samples
            .iter()
            .map(|(lang, text)| (lang.to_string(), unit(trigram_counts(text))))
            .collect();
        Self {
            profiles,
            saturation: Self::DEFAULT_SATURATION,
        }
    }

    pub fn scores(&self, text: &str) -> Vec<(&str, f64)> {
        let doc = unit(trigram_counts(text));
        self.profiles
            .iter()
            .map(|(lang, profile)| {
                let cos: f64 = doc
                    .iter()
                    .filter_map(|(g, w)| profile.get(g).map(|p| p * w))
                    .sum();
                (lang.as_str(), cos)
            })
            .collect()
    }
}

impl LanguageIdProvider for TrigramLanguageId {
    fn predict(&self, text: &str) -> Result<LangPrediction, ProviderError> {
        let mut scores = self.scores(text);
        // Stable sort keeps profile order on ties.
        scores.sort_by(|a, b| b.1.total_cmp(&a.1));
        let (lang, best) = scores
            .first()
            .copied()
            .ok_or_else(|| ProviderError::fatal("no language profiles"))?;
        let second = scores.get(1).map_or(0.0, |s| s.1);
        if best <= f64::EPSILON {
            return Ok(LangPrediction::new(lang, 0.0));
        }
        let margin = (best - second) / best;
        let coverage = (best / self.saturation).min(1.0);
        Ok(LangPrediction::new(lang, margin * coverage))
    }
}

fn fold(c: char) -> char {
    if is_cjk(c) {
        '\u{4E00}'
    } else if c.is_numeric() {
        '0'
    } else {
        c
    }
}

fn trigram_counts(text: &str) -> Profile {
    let normalized = normalize_text(text);
    let mut counts = Profile::new();
    for token in normalized.as_str().split(' ').filter(|t| !t.is_empty()) {
        let padded: Vec<char> = std::iter::once(' ')
            .chain(token.chars().map(fold))
            .chain(std::iter::once(' '))
            .collect();
        for w in padded.windows(3) {
            *counts.entry(w.iter().collect()).or_default() += 1.0;
        }
    }
    counts
}

fn unit(mut v: Profile) -> Profile {
    let norm = v.values().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.values_mut().for_each(|x| *x /= norm);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scripted(f64);
    impl LanguageIdProvider for Scripted {
        fn predict(&self, _: &str) -> Result<LangPrediction, ProviderError> {
            Ok(LangPrediction::new("en", self.0))
        }
    }

    struct Failing;
    impl LanguageIdProvider for Failing {
        fn predict(&self, _: &str) -> Result<LangPrediction, ProviderError> {
            Err(ProviderError::retryable("timeout"))
        }
    }

    fn gate(conf: f64) -> (Verdict, Document) {
        let mut doc = Document::new("d", 0, "some text");
        let v = classify_language(&mut doc, &Scripted(conf), &LangIdConfig::default());
        (v, doc)
    }

    #[test]
    fn threshold_is_strict_less() {
        assert!(gate(0.90).0.keep);
        assert!(!gate(0.64).0.keep);
        assert!(gate(0.65).0.keep);
        let (_, doc) = gate(0.9);
        assert_eq!(doc.lang.as_deref(), Some("en"));
        assert_eq!(doc.lang_conf, Some(0.9));
    }

    #[test]
    fn empty_text_and_provider_errors_drop() {
        let mut doc = Document::new("d", 0, "  ");
        assert_eq!(
            classify_language(&mut doc, &Scripted(1.0), &LangIdConfig::default()),
            Verdict::drop("empty")
        );
        let mut doc = Document::new("d", 0, "text");
        let cfg = LangIdConfig {
            retry: RetryPolicy::no_wait(2),
            ..Default::default()
        };
        assert_eq!(classify_language(&mut doc, &Failing, &cfg), Verdict::drop("langid_error"));
    }

    #[test]
    fn baseline_separates_english_and_chinese() {
        let id = TrigramLanguageId::default();
        let en = id
            .predict("The committee published its annual report on water quality in the northern river basin, noting that most of the monitoring stations recorded improvements over the previous year.")
            .unwrap();
        assert_eq!(en.lang, "en");
        assert!(en.confidence >= 0.65, "{en:?}");

        let zh = id
            .predict("研究人员在报告中指出，北方流域的大部分监测站点的水质在过去一年中都有明显改善，但部分支流仍然存在污染问题。")
            .unwrap();
        assert_eq!(zh.lang, "zh");
        assert!(zh.confidence >= 0.65, "{zh:?}");
    }

    #[test]
    fn baseline_is_unsure_about_noise_and_mixtures() {
        let id = TrigramLanguageId::default();
        let noise = id.predict("xq7 zzkv wjjq pfft qxxz vvkw 9913 zq").unwrap();
        assert!(noise.confidence < 0.65, "{noise:?}");
        let mixed = id
            .predict("the report 研究报告 shows that 水质改善 in the river 流域的 stations 监测站")
            .unwrap();
        assert!(mixed.confidence < 0.65, "{mixed:?}");
        assert_eq!(id.predict("").unwrap().confidence, 0.0);
    }

    #[test]
    fn predictions_are_repeatable() {
        let id = TrigramLanguageId::default();
        let text = "A short note about the weather today.";
        assert_eq!(id.predict(text).unwrap(), id.predict(text).unwrap());
    }
}
