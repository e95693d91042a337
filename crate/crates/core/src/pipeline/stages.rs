use std::collections::BTreeMap;

use rayon::prelude::*;
use serde_json::Value;

use super::config::{StageParams, StageSpec};
use crate::document::{Document, Outcome};
use crate::error::Result;
use crate::exact::{dedup_exact, DigestTable};
use crate::fuzzy::{dedup_fuzzy, DefaultTokenizer, LshIndex};
use crate::ingest::{url_filter, Blocklist};
use crate::langid::{classify_language, LanguageIdProvider, TrigramLanguageId};
use crate::line_dedup::{apply_line_dedup, build_frequency_table, LineFrequencyTable};
use crate::quality::{
    balance_categories, gate_quality, gate_web_type, label_categories, remove_clutter_lines, BalanceKey,
    CategoryClassifier, HeuristicClutterScorer, LineScorer, QualityScorer, WebTypeProvider,
};
use crate::remote::{HttpJsonClient, RemoteEmbeddingProvider, RemoteLabeler, RemoteLanguageId, RemoteScorer};
use crate::rules::{apply_rules, builtin_ruleset, MetaFilter, RuleAction};
use crate::semantic::{run_semantic_dedup, EmbeddingCache, EmbeddingProvider, MockEmbeddingProvider};

/// Outcomes of one stage plus stage-specific figures for the manifest.
#[derive(Debug)]
pub struct StageResult {
    pub outcomes: Vec<Outcome>,
    pub extra: BTreeMap<String, Value>,
}

impl StageResult {
    fn plain(outcomes: Vec<Outcome>) -> Self {
        Self {
            outcomes,
            extra: BTreeMap::new(),
        }
    }
}

fn per_doc(docs: Vec<Document>, f: impl Fn(Document) -> Outcome + Sync + Send) -> Vec<Outcome> {
    docs.into_par_iter().map(f).collect()
}

/// Runs one stage over in-memory documents.
pub fn execute(spec: &StageSpec, docs: Vec<Document>) -> Result<StageResult> {
    match &spec.params {
        StageParams::UrlFilter(p) => {
            let mut blocklist = match &p.blocklist {
                Some(path) => Blocklist::load(path)?,
                None => Blocklist::default(),
            };
            for d in &p.domains {
                blocklist.insert(d)?;
            }
            Ok(StageResult::plain(per_doc(docs, |doc| {
                let v = url_filter(&doc, &blocklist);
                Outcome::new(doc, v)
            })))
        }
        StageParams::Langid(p) => {
            let provider: Box<dyn LanguageIdProvider> = match &p.remote {
                Some(r) => Box::new(RemoteLanguageId(HttpJsonClient::new(r.clone()))),
                None => Box::new(TrigramLanguageId::default()),
            };
            Ok(StageResult::plain(per_doc(docs, |mut doc| {
                let v = classify_language(&mut doc, provider.as_ref(), &p.gate);
                Outcome::new(doc, v)
            })))
        }
        StageParams::ExactDedup(p) => {
            let mut table = match &p.history {
                Some(dir) => DigestTable::load(dir)?,
                None => DigestTable::default(),
            };
            let outcomes = dedup_exact(docs, &mut table);
            if let Some(dir) = &p.history {
                table.persist(dir)?;
            }
            Ok(StageResult::plain(outcomes))
        }
        StageParams::LineDedup(p) => {
            let mut table = match &p.table {
                Some(path) if path.exists() => LineFrequencyTable::load(path, &p.config)?,
                _ => LineFrequencyTable::default(),
            };
            table.merge(build_frequency_table(&docs, &p.config));
            let outcomes = apply_line_dedup(docs, &mut table, &p.config);
            if let Some(path) = &p.table {
                table.save(path, &p.config)?;
            }
            let over_cap = table.iter().filter(|(_, c)| c.global > p.config.frequency_cap).count();
            let mut extra = BTreeMap::new();
            extra.insert("distinct_lines".into(), Value::from(table.len()));
            extra.insert("lines_over_cap".into(), Value::from(over_cap));
            Ok(StageResult { outcomes, extra })
        }
        StageParams::RuleFilter(p) => {
            let mut ruleset = builtin_ruleset(&p.rules)?;
            if let Some(m) = &p.meta {
                let mut domains = match &m.domains_file {
                    Some(path) => Blocklist::load(path)?,
                    None => Blocklist::default(),
                };
                for d in &m.domains {
                    domains.insert(d)?;
                }
                let filter = MetaFilter {
                    domains,
                    url_terms: m.url_terms.iter().map(|t| t.to_lowercase()).collect(),
                    title_terms: m.title_terms.iter().map(|t| t.to_lowercase()).collect(),
                };
                let action = p.rules.actions.get("meta_filter").copied().unwrap_or(RuleAction::Drop);
                ruleset.push(filter, action)?;
            }
            Ok(StageResult::plain(per_doc(docs, |doc| {
                let v = apply_rules(&doc, &ruleset);
                Outcome::new(doc, v)
            })))
        }
        StageParams::FuzzyDedup(p) => {
            let mut index = match &p.index {
                Some(dir) if dir.join("manifest.json").exists() => LshIndex::load(dir, &p.lsh)?,
                _ => LshIndex::new(&p.lsh),
            };
            let outcomes = dedup_fuzzy(docs, &p.lsh, &DefaultTokenizer, &mut index);
            if let Some(dir) = &p.index {
                index.save(dir, &p.lsh)?;
            }
            Ok(StageResult::plain(outcomes))
        }
        StageParams::Webtype(p) => {
            let provider: Box<dyn WebTypeProvider> = match &p.remote {
                Some(r) => Box::new(RemoteLabeler(HttpJsonClient::new(r.clone()))),
                None => Box::new(p.heuristic.clone()),
            };
            Ok(StageResult::plain(per_doc(docs, |doc| {
                let v = gate_web_type(&doc, provider.as_ref(), &p.retry);
                Outcome::new(doc, v)
            })))
        }
        StageParams::Clutter(p) => {
            let scorer: Box<dyn LineScorer> = match &p.remote {
                Some(r) => Box::new(RemoteScorer(HttpJsonClient::new(r.clone()))),
                None => {
                    let mut s = HeuristicClutterScorer {
                        min_words: p.min_words,
                        frequent_at: p.frequent_at,
                        table: None,
                    };
                    if let Some(path) = p.line_table.as_ref().filter(|p| p.exists()) {
                        s.table = Some(LineFrequencyTable::load_any(path)?.0);
                    }
                    Box::new(s)
                }
            };
            let gate = p.gate();
            Ok(StageResult::plain(per_doc(docs, |doc| remove_clutter_lines(doc, scorer.as_ref(), &gate))))
        }
        StageParams::Quality(p) => {
            let scorer: Box<dyn QualityScorer> = match &p.remote {
                Some(r) => Box::new(RemoteScorer(HttpJsonClient::new(r.clone()))),
                None => Box::new(p.heuristic.clone()),
            };
            Ok(StageResult::plain(per_doc(docs, |mut doc| {
                let v = gate_quality(&mut doc, scorer.as_ref(), &p.gate);
                Outcome::new(doc, v)
            })))
        }
        StageParams::SemanticDedup(p) => {
            let provider: Box<dyn EmbeddingProvider> = match &p.remote {
                Some(r) => Box::new(RemoteEmbeddingProvider(HttpJsonClient::new(r.clone()))),
                None => Box::new(MockEmbeddingProvider {
                    dim: p.mock_dim,
                    seed: p.semantic.seed,
                    collapse_duplicates: p.collapse_duplicates,
                }),
            };
            let k = p.semantic.k_for(docs.len());
            let mut cache = p.cache.as_deref().map(EmbeddingCache::open).transpose()?;
            let outcomes = run_semantic_dedup(docs, provider.as_ref(), &p.semantic, cache.as_mut())?;
            let mut extra = BTreeMap::new();
            extra.insert("clusters".into(), Value::from(if outcomes.is_empty() { 0 } else { k }));
            Ok(StageResult { outcomes, extra })
        }
        StageParams::Balance(p) => {
            let mut docs = docs;
            if p.balance.key == BalanceKey::Category {
                let classifier: Box<dyn CategoryClassifier> = match &p.remote {
                    Some(r) => Box::new(RemoteLabeler(HttpJsonClient::new(r.clone()))),
                    None => Box::new(p.classifier.clone()),
                };
                label_categories(&mut docs, classifier.as_ref(), &Default::default());
            }
            let (outcomes, plan) = balance_categories(docs, &p.balance)?;
            let mut extra = BTreeMap::new();
            extra.insert("plan".into(), serde_json::to_value(&plan).expect("plan serializes"));
            Ok(StageResult { outcomes, extra })
        }
    }
}
