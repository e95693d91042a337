//! Heuristic document filters in the RefinedWeb/Gopher family.
//!
//! Thresholds here are stand-ins: every one is configurable and the defaults
//! are conventional Gopher-style values, not tuned on any corpus.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::document::{Document, Verdict};
use crate::error::{Error, Result};
use crate::ingest::{url_host, Blocklist};
use crate::text::{cjk_fraction, count_words, raw_lines};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleAction {
    Drop,
    Flag,
}

/// A pure document predicate. `check` returns the reason code when the rule fires.
pub trait Rule: Send + Sync {
    fn name(&self) -> &str;
    fn check(&self, doc: &Document) -> Option<&'static str>;
}

struct Entry {
    rule: Box<dyn Rule>,
    action: RuleAction,
}

/// An ordered set of uniquely named rules.
#[derive(Default)]
pub struct Ruleset {
    rules: Vec<Entry>,
}

impl std::fmt::Debug for Ruleset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}

impl Ruleset {
    pub fn push(&mut self, rule: impl Rule + 'static, action: RuleAction) -> Result<()> {
        self.push_boxed(Box::new(rule), action)
    }

    pub fn push_boxed(&mut self, rule: Box<dyn Rule>, action: RuleAction) -> Result<()> {
        if self.names().any(|n| n == rule.name()) {
            return Err(Error::config(format!("duplicate rule name `{}`", rule.name())));
        }
        self.rules.push(Entry { rule, action });
        Ok(())
    }

    /// Moves every rule of `other` into `self`; names must stay unique.
    pub fn extend(&mut self, other: Ruleset) -> Result<()> {
        for e in other.rules {
            self.push_boxed(e.rule, e.action)?;
        }
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.rules.iter().map(|e| e.rule.name())
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn set_action(&mut self, name: &str, action: RuleAction) -> Result<()> {
        let entry = self
            .rules
            .iter_mut()
            .find(|e| e.rule.name() == name)
            .ok_or_else(|| Error::config(format!("unknown rule `{name}`")))?;
        entry.action = action;
        Ok(())
    }
}

/// Evaluates every rule (no short-circuit) so the reason list is complete.
pub fn apply_rules(doc: &Document, ruleset: &Ruleset) -> Verdict {
    let mut verdict = Verdict::keep();
    for entry in &ruleset.rules {
        if let Some(code) = entry.rule.check(doc) {
            match entry.action {
                RuleAction::Drop => {
                    verdict.keep = false;
                    verdict.reasons.push(code.to_string());
                }
                RuleAction::Flag => verdict.flags.push(code.to_string()),
            }
        }
    }
    verdict
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    pub min_words: usize,
    pub max_words: usize,
    pub max_symbol_to_word_ratio: f64,
    pub max_duplicate_line_fraction: f64,
    pub max_duplicate_paragraph_fraction: f64,
    pub max_ellipsis_line_fraction: f64,
    pub max_bullet_line_fraction: f64,
    pub ad_keywords: Vec<String>,
    pub registration_keywords: Vec<String>,
    /// Distinct lines that must contain a keyword before the document drops.
    pub min_keyword_lines: usize,
    pub min_diff_marker_lines: usize,
    pub min_mean_word_length: f64,
    pub max_mean_word_length: f64,
    /// Documents whose CJK share of alphanumerics reaches this skip the
    /// mean-word-length rule.
    pub cjk_fraction_cutoff: f64,
    /// Per-rule action overrides, keyed by rule name.
    pub actions: BTreeMap<String, RuleAction>,
}

impl Default for RuleConfig {
    fn default() -> Self {
        let words = |w: &[&str]| w.iter().map(|s| s.to_string()).collect();
        Self {
            min_words: 50,
            max_words: 100_000,
            max_symbol_to_word_ratio: 0.1,
            max_duplicate_line_fraction: 0.30,
            max_duplicate_paragraph_fraction: 0.30,
            max_ellipsis_line_fraction: 0.30,
            max_bullet_line_fraction: 0.90,
            ad_keywords: words(&[
                "buy now",
                "limited time offer",
                "free shipping",
                "click here",
                "best price",
                "立即购买",
                "限时优惠",
                "点击这里",
            ]),
            registration_keywords: words(&[
                "sign up",
                "log in to continue",
                "create an account",
                "subscribe to our newsletter",
                "register now",
                "立即注册",
                "登录后查看",
            ]),
            min_keyword_lines: 3,
            min_diff_marker_lines: 5,
            min_mean_word_length: 3.0,
            max_mean_word_length: 10.0,
            cjk_fraction_cutoff: 0.3,
            actions: BTreeMap::new(),
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<()> {
        let fractions = [
            ("max_symbol_to_word_ratio", self.max_symbol_to_word_ratio),
            ("max_duplicate_line_fraction", self.max_duplicate_line_fraction),
            ("max_duplicate_paragraph_fraction", self.max_duplicate_paragraph_fraction),
            ("max_ellipsis_line_fraction", self.max_ellipsis_line_fraction),
            ("max_bullet_line_fraction", self.max_bullet_line_fraction),
            ("cjk_fraction_cutoff", self.cjk_fraction_cutoff),
        ];
        for (name, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} = {v} is not a fraction in [0, 1]")));
            }
        }
        if self.min_mean_word_length < 0.0 || self.max_mean_word_length < self.min_mean_word_length
        {
            return Err(Error::config("mean word length bounds must satisfy 0 <= min <= max"));
        }
        if self.max_words < self.min_words {
            return Err(Error::config("max_words must be >= min_words"));
        }
        Ok(())
    }
}

/// The ten default rules, thresholds taken from `config`.
pub fn builtin_ruleset(config: &RuleConfig) -> Result<Ruleset> {
    config.validate()?;
    let c = config.clone();
    let mut rs = Ruleset::default();
    rs.push(EmptyContent, RuleAction::Drop)?;
    rs.push(WordCount { min: c.min_words, max: c.max_words }, RuleAction::Drop)?;
    rs.push(SymbolRatio { max: c.max_symbol_to_word_ratio }, RuleAction::Drop)?;
    rs.push(DuplicateLines { max: c.max_duplicate_line_fraction }, RuleAction::Drop)?;
    rs.push(DuplicateParagraphs { max: c.max_duplicate_paragraph_fraction }, RuleAction::Drop)?;
    rs.push(EllipsisLines { max: c.max_ellipsis_line_fraction }, RuleAction::Drop)?;
    rs.push(BulletLines { max: c.max_bullet_line_fraction }, RuleAction::Drop)?;
    rs.push(
        PromptKeywords::new(&c.ad_keywords, &c.registration_keywords, c.min_keyword_lines),
        RuleAction::Drop,
    )?;
    rs.push(DiffMarkers { min_lines: c.min_diff_marker_lines }, RuleAction::Drop)?;
    rs.push(
        MeanWordLength {
            min: c.min_mean_word_length,
            max: c.max_mean_word_length,
            cjk_cutoff: c.cjk_fraction_cutoff,
        },
        RuleAction::Drop,
    )?;
    for (name, action) in &c.actions {
        rs.set_action(name, *action)?;
    }
    Ok(rs)
}

fn is_blank(doc: &Document) -> bool {
    doc.text.trim().is_empty()
}

/// Non-blank lines, trimmed.
fn content_lines(text: &str) -> Vec<&str> {
    raw_lines(text).map(str::trim).filter(|l| !l.is_empty()).collect()
}

/// Fraction of items that belong to a group of identical items of size > 1.
fn duplicated_fraction(items: &[&str]) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for item in items {
        *counts.entry(item).or_default() += 1;
    }
    let dup = items.iter().filter(|i| counts[*i] > 1).count();
    dup as f64 / items.len() as f64
}

pub struct EmptyContent;

impl Rule for EmptyContent {
    fn name(&self) -> &str {
        "empty_content"
    }
    fn check(&self, doc: &Document) -> Option<&'static str> {
        is_blank(doc).then_some("empty_content")
    }
}

/// Word count bounds; reports `too_short` or `too_long`.
pub struct WordCount {
    pub min: usize,
    pub max: usize,
}

impl Rule for WordCount {
    fn name(&self) -> &str {
        "word_count"
    }
    fn check(&self, doc: &Document) -> Option<&'static str> {
        if is_blank(doc) {
            return None;
        }
        let n = count_words(&doc.text);
        if n < self.min {
            Some("too_short")
        } else if n > self.max {
            Some("too_long")
        } else {
            None
        }
    }
}

/// (`#` count + ellipsis count) / words.
pub struct SymbolRatio {
    pub max: f64,
}

pub fn symbol_to_word_ratio(text: &str) -> f64 {
    let words = count_words(text);
    if words == 0 {
        return 0.0;
    }
    let hashes = text.matches('#').count();
    let ellipses = text.matches('…').count() + text.matches("...").count();
    (hashes + ellipses) as f64 / words as f64
}

impl Rule for SymbolRatio {
    fn name(&self) -> &str {
        "symbol_to_word_ratio"
    }
    fn check(&self, doc: &Document) -> Option<&'static str> {
        (!is_blank(doc) && symbol_to_word_ratio(&doc.text) >= self.max)
            .then_some("symbol_to_word_ratio")
    }
}

pub struct DuplicateLines {
    pub max: f64,
}

pub fn duplicate_line_fraction(text: &str) -> f64 {
    duplicated_fraction(&content_lines(text))
}

impl Rule for DuplicateLines {
    fn name(&self) -> &str {
        "duplicate_line_fraction"
    }
    fn check(&self, doc: &Document) -> Option<&'static str> {
        (!is_blank(doc) && duplicate_line_fraction(&doc.text) >= self.max)
            .then_some("duplicate_line_fraction")
    }
}

pub struct DuplicateParagraphs {
    pub max: f64,
}

/// Paragraphs are separated by one or more blank lines.
pub fn duplicate_paragraph_fraction(text: &str) -> f64 {
    let mut paragraphs: Vec<String> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in raw_lines(text) {
        if line.trim().is_empty() {
            if !current.is_empty() {
                paragraphs.push(current.join("\n"));
                current.clear();
            }
        } else {
            current.push(line.trim());
        }
    }
    if !current.is_empty() {
        paragraphs.push(current.join("\n"));
    }
    let refs: Vec<&str> = paragraphs.iter().map(String::as_str).collect();
    duplicated_fraction(&refs)
}

impl Rule for DuplicateParagraphs {
    fn name(&self) -> &str {
        "duplicate_paragraph_fraction"
    }
    fn check(&self, doc: &Document) -> Option<&'static str> {
        (!is_blank(doc) && duplicate_paragraph_fraction(&doc.text) >= self.max)
            .then_some("duplicate_paragraph_fraction")
    }
}

fn line_fraction(text: &str, pred: impl Fn(&str) -> bool) -> f64 {
    let lines = content_lines(text);
    if lines.is_empty() {
        return 0.0;
    }
    lines.iter().filter(|l| pred(l)).count() as f64 / lines.len() as f64
}

pub struct EllipsisLines {
    pub max: f64,
}

impl Rule for EllipsisLines {
    fn name(&self) -> &str {
        "ellipsis_line_fraction"
    }
    fn check(&self, doc: &Document) -> Option<&'static str> {
        let f = line_fraction(&doc.text, |l| l.ends_with("...") || l.ends_with('…'));
        (!is_blank(doc) && f >= self.max).then_some("ellipsis_line_fraction")
    }
}

const BULLETS: &[char] = &['•', '●', '○', '◦', '▪', '‣', '·', '-', '*', '–'];

pub struct BulletLines {
    pub max: f64,
}

impl Rule for BulletLines {
    fn name(&self) -> &str {
        "bullet_line_fraction"
    }
    fn check(&self, doc: &Document) -> Option<&'static str> {
        let f = line_fraction(&doc.text, |l| l.starts_with(BULLETS));
        (!is_blank(doc) && f >= self.max).then_some("bullet_line_fraction")
    }
}

/// Advertisement and registration prompts. Each list is checked separately;
/// the rule reports `ad_keywords` or `registration_keywords` for whichever
/// list hits at least `min_lines` distinct lines first.
pub struct PromptKeywords {
    ads: Vec<String>,
    registration: Vec<String>,
    min_lines: usize,
}

impl PromptKeywords {
    pub fn new(ads: &[String], registration: &[String], min_lines: usize) -> Self {
        let lower = |v: &[String]| v.iter().map(|k| k.to_lowercase()).filter(|k| !k.is_empty()).collect();
        Self {
            ads: lower(ads),
            registration: lower(registration),
            min_lines: min_lines.max(1),
        }
    }

    fn lines_hit(lines: &[String], keywords: &[String]) -> usize {
        lines
            .iter()
            .collect::<HashSet<_>>()
            .into_iter()
            .filter(|l| keywords.iter().any(|k| l.contains(k.as_str())))
            .count()
    }
}

impl Rule for PromptKeywords {
    fn name(&self) -> &str {
        "prompt_keywords"
    }
    fn check(&self, doc: &Document) -> Option<&'static str> {
        let lines: Vec<String> = content_lines(&doc.text).iter().map(|l| l.to_lowercase()).collect();
        if Self::lines_hit(&lines, &self.ads) >= self.min_lines {
            Some("ad_keywords")
        } else if Self::lines_hit(&lines, &self.registration) >= self.min_lines {
            Some("registration_keywords")
        } else {
            None
        }
    }
}

/// Wiki/code diff residue: lines opening with `@@`, `+++` or `---`.
pub struct DiffMarkers {
    pub min_lines: usize,
}

impl Rule for DiffMarkers {
    fn name(&self) -> &str {
        "diff_markers"
    }
    fn check(&self, doc: &Document) -> Option<&'static str> {
        let n = content_lines(&doc.text)
            .iter()
            .filter(|l| l.starts_with("@@") || l.starts_with("+++") || l.starts_with("---"))
            .count();
        (n >= self.min_lines.max(1)).then_some("diff_markers")
    }
}

/// Mean characters per whitespace token, for non-CJK documents.
pub struct MeanWordLength {
    pub min: f64,
    pub max: f64,
    pub cjk_cutoff: f64,
}

pub fn mean_word_length(text: &str) -> f64 {
    let (chars, words) = text
        .split_whitespace()
        .fold((0usize, 0usize), |(c, w), t| (c + t.chars().count(), w + 1));
    if words == 0 {
        0.0
    } else {
        chars as f64 / words as f64
    }
}

impl Rule for MeanWordLength {
    fn name(&self) -> &str {
        "mean_word_length"
    }
    fn check(&self, doc: &Document) -> Option<&'static str> {
        if is_blank(doc) || cjk_fraction(&doc.text) >= self.cjk_cutoff {
            return None;
        }
        let m = mean_word_length(&doc.text);
        (m < self.min || m > self.max).then_some("mean_word_length")
    }
}

/// Domain, URL and title meta filter. Not part of the default set; built
/// when a blocklist or term list is configured.
pub struct MetaFilter {
    pub domains: Blocklist,
    /// Lowercase substrings matched against the full URL.
    pub url_terms: Vec<String>,
    /// Lowercase substrings matched against the first content line.
    pub title_terms: Vec<String>,
}

impl Rule for MetaFilter {
    fn name(&self) -> &str {
        "meta_filter"
    }
    fn check(&self, doc: &Document) -> Option<&'static str> {
        if let Some(host) = url_host(doc.url.trim()).filter(|_| !doc.url.trim().is_empty()) {
            if self.domains.matches_host(&host) {
                return Some("meta_domain");
            }
        }
        let url = doc.url.to_lowercase();
        if !url.is_empty() && self.url_terms.iter().any(|t| url.contains(t.as_str())) {
            return Some("meta_url");
        }
        let title = content_lines(&doc.text).first().map(|l| l.to_lowercase());
        match title {
            Some(t) if self.title_terms.iter().any(|term| t.contains(term.as_str())) => {
                Some("meta_title")
            }
            _ => None,
        }
    }
}
