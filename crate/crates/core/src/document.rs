//! Corpus records, per-stage verdicts and the counters stages report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// One corpus record as it flows between stages.
///
/// The serialized shape is the line-delimited JSON record used for raw input
/// and for every intermediate file; optional fields are omitted when unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub seq: u64,
    #[serde(default)]
    pub url: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang_conf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<f64>,
    /// Integer emission count assigned by upsampling balance; absent means 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stage: String,
    pub action: String,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, seq: u64, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            seq,
            url: String::new(),
            text: text.into(),
            lang: None,
            lang_conf: None,
            category: None,
            quality: None,
            repeat: None,
            trace: Vec::new(),
        }
    }

    pub fn with_url(mut self, url: impl Into<String>) -> Self {
        self.url = url.into();
        self
    }

    /// Appends a trace entry. Entries are never rewritten.
    pub fn push_trace(&mut self, stage: &str, action: impl Into<String>) {
        self.trace.push(TraceEntry {
            stage: stage.to_string(),
            action: action.into(),
        });
    }
}

/// A document after a stage, possibly edited, with the stage's decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub doc: Document,
    pub verdict: Verdict,
    /// Extra detail for the trace entry, e.g. the id a duplicate collided with.
    pub note: Option<String>,
}

impl Outcome {
    pub fn new(doc: Document, verdict: Verdict) -> Self {
        Self {
            doc,
            verdict,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Trace action for this outcome: `keep`, `keep:<flags>` or `drop:<reason>`,
    /// followed by ` (<note>)` when a note is set.
    pub fn trace_action(&self) -> String {
        let action = self.verdict.trace_action();
        match &self.note {
            Some(note) => format!("{action} ({note})"),
            None => action,
        }
    }
}

/// Keep/drop decision for one document at one stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub keep: bool,
    /// Reason codes of every drop-action check that fired, in evaluation order.
    pub reasons: Vec<String>,
    /// Non-fatal annotations (flag-action rules, soft warnings).
    pub flags: Vec<String>,
}

impl Verdict {
    pub fn keep() -> Self {
        Self {
            keep: true,
            reasons: Vec::new(),
            flags: Vec::new(),
        }
    }

    pub fn drop(reason: impl Into<String>) -> Self {
        Self {
            keep: false,
            reasons: vec![reason.into()],
            flags: Vec::new(),
        }
    }

    pub fn with_flag(mut self, flag: impl Into<String>) -> Self {
        self.flags.push(flag.into());
        self
    }

    /// The reason a dropped document is counted under.
    pub fn primary_reason(&self) -> Option<&str> {
        if self.keep {
            None
        } else {
            Some(self.reasons.first().map(String::as_str).unwrap_or("dropped"))
        }
    }

    pub fn trace_action(&self) -> String {
        match self.primary_reason() {
            Some(reason) => format!("drop:{reason}"),
            None if self.flags.is_empty() => "keep".to_string(),
            None => format!("keep:{}", self.flags.join(",")),
        }
    }
}

/// Counters for one stage run.
///
/// Every input document is counted exactly once: either in `docs_out` or under
/// its primary drop reason in `drops`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStats {
    pub docs_in: u64,
    pub docs_out: u64,
    pub drops: BTreeMap<String, u64>,
    /// Every reason that fired, including secondary reasons of dropped documents.
    pub reason_hits: BTreeMap<String, u64>,
    pub flags: BTreeMap<String, u64>,
    pub bytes_in: u64,
    pub bytes_out: u64,
}

impl StageStats {
    pub fn record(&mut self, verdict: &Verdict, bytes_in: u64, bytes_out: u64) {
        self.docs_in += 1;
        self.bytes_in += bytes_in;
        for reason in &verdict.reasons {
            *self.reason_hits.entry(reason.clone()).or_default() += 1;
        }
        for flag in &verdict.flags {
            *self.flags.entry(flag.clone()).or_default() += 1;
        }
        match verdict.primary_reason() {
            None => {
                self.docs_out += 1;
                self.bytes_out += bytes_out;
            }
            Some(reason) => *self.drops.entry(reason.to_string()).or_default() += 1,
        }
    }

    /// An input line that never became a document.
    pub fn record_malformed(&mut self, bytes: u64) {
        self.record(&Verdict::drop("malformed"), bytes, 0);
    }

    pub fn dropped(&self) -> u64 {
        self.drops.values().sum()
    }

    /// `docs_out + Σ drops == docs_in`
    pub fn is_conserved(&self) -> bool {
        self.docs_out + self.dropped() == self.docs_in
    }

    /// Histogram with survivors under `keep` and drops under their reasons.
    pub fn histogram(&self) -> BTreeMap<String, u64> {
        let mut out = self.drops.clone();
        out.insert("keep".to_string(), self.docs_out);
        out
    }

    pub fn merge(&mut self, other: &StageStats) {
        self.docs_in += other.docs_in;
        self.docs_out += other.docs_out;
        self.bytes_in += other.bytes_in;
        self.bytes_out += other.bytes_out;
        for (target, source) in [
            (&mut self.drops, &other.drops),
            (&mut self.reason_hits, &other.reason_hits),
            (&mut self.flags, &other.flags),
        ] {
            for (k, v) in source {
                *target.entry(k.clone()).or_default() += v;
            }
        }
    }
}

pub fn accumulate_stats<'a>(verdicts: impl IntoIterator<Item = &'a Verdict>) -> StageStats {
    let mut stats = StageStats::default();
    for verdict in verdicts {
        stats.record(verdict, 0, 0);
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn keeps_and_drops_are_tallied() {
        let mut verdicts = vec![Verdict::keep(); 3];
        verdicts.extend(vec![Verdict::drop("too_short"); 2]);
        let stats = accumulate_stats(&verdicts);
        assert_eq!(stats.docs_in, 5);
        assert_eq!(stats.docs_out, 3);
        let hist = stats.histogram();
        assert_eq!(hist.len(), 2);
        assert_eq!(hist["keep"], 3);
        assert_eq!(hist["too_short"], 2);
    }

    #[test]
    fn empty_stream_is_all_zero() {
        let stats = accumulate_stats(&[]);
        assert_eq!(stats, StageStats::default());
        assert!(stats.is_conserved());
    }

    #[test]
    fn mixed_reasons_match_linear_recount() {
        let reasons = ["too_short", "exact_dup", "empty_content", "fuzzy_dup"];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let verdicts: Vec<Verdict> = (0..500)
            .map(|_| {
                let pick = rng.random_range(0..=reasons.len());
                if pick == reasons.len() {
                    Verdict::keep()
                } else {
                    Verdict::drop(reasons[pick])
                }
            })
            .collect();
        let stats = accumulate_stats(&verdicts);

        let mut expected: BTreeMap<String, u64> = BTreeMap::new();
        for v in &verdicts {
            let key = if v.keep { "keep".to_string() } else { v.reasons[0].clone() };
            *expected.entry(key).or_default() += 1;
        }
        assert_eq!(stats.histogram(), expected);
        assert!(stats.is_conserved());
    }

    #[test]
    fn secondary_reasons_do_not_break_conservation() {
        let mut v = Verdict::drop("too_short");
        v.reasons.push("symbol_to_word_ratio".into());
        let stats = accumulate_stats([&v, &Verdict::keep().with_flag("url_unparsed")]);
        assert!(stats.is_conserved());
        assert_eq!(stats.drops.len(), 1);
        assert_eq!(stats.reason_hits.len(), 2);
        assert_eq!(stats.flags["url_unparsed"], 1);
    }
}
