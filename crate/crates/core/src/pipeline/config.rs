use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fuzzy::LshParams;
use crate::langid::LangIdConfig;
use crate::line_dedup::LineDedupConfig;
use crate::provider::RetryPolicy;
use crate::quality::{
    BalanceConfig, BalanceKey, ClutterConfig, HeuristicQualityScorer, HeuristicWebType, KeywordCategoryClassifier,
    QualityConfig,
};
use crate::remote::RemoteConfig;
use crate::rules::RuleConfig;
use crate::semantic::SemanticConfig;

/// Environment variable that overrides the configured worker count.
pub const WORKERS_ENV: &str = "REFINERY_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    UrlFilter,
    Langid,
    ExactDedup,
    LineDedup,
    RuleFilter,
    FuzzyDedup,
    Webtype,
    Clutter,
    Quality,
    SemanticDedup,
    Balance,
}

impl StageKind {
    /// Preparation, rule-based processing, then model-based processing.
    pub const DEFAULT_ORDER: [StageKind; 11] = [
        StageKind::UrlFilter,
        StageKind::Langid,
        StageKind::ExactDedup,
        StageKind::LineDedup,
        StageKind::RuleFilter,
        StageKind::FuzzyDedup,
        StageKind::Webtype,
        StageKind::Clutter,
        StageKind::Quality,
        StageKind::SemanticDedup,
        StageKind::Balance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StageKind::UrlFilter => "url_filter",
            StageKind::Langid => "langid",
            StageKind::ExactDedup => "exact_dedup",
            StageKind::LineDedup => "line_dedup",
            StageKind::RuleFilter => "rule_filter",
            StageKind::FuzzyDedup => "fuzzy_dedup",
            StageKind::Webtype => "webtype",
            StageKind::Clutter => "clutter",
            StageKind::Quality => "quality",
            StageKind::SemanticDedup => "semantic_dedup",
            StageKind::Balance => "balance",
        }
    }

    pub fn is_dedup(self) -> bool {
        matches!(
            self,
            StageKind::ExactDedup | StageKind::LineDedup | StageKind::FuzzyDedup | StageKind::SemanticDedup
        )
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::DEFAULT_ORDER
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::DEFAULT_ORDER.iter().map(|k| k.name()).collect();
                Error::config(format!("unknown stage {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UrlFilterParams {
    pub blocklist: Option<PathBuf>,
    pub domains: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LangIdParams {
    pub gate: LangIdConfig,
    pub remote: Option<RemoteConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExactParams {
    /// Digest table directory carried across runs (incremental mode).
    pub history: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LineDedupParams {
    pub config: LineDedupConfig,
    /// Frequency table file carried across runs (incremental mode).
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaParams {
    pub domains_file: Option<PathBuf>,
    pub domains: Vec<String>,
    pub url_terms: Vec<String>,
    pub title_terms: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleParams {
    pub rules: RuleConfig,
    pub meta: Option<MetaParams>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FuzzyParams {
    pub lsh: LshParams,
    /// Bucket directory carried across runs (incremental mode).
    pub index: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WebTypeParams {
    pub heuristic: HeuristicWebType,
    pub retry: RetryPolicy,
    pub remote: Option<RemoteConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClutterParams {
    pub threshold: f64,
    pub retry: RetryPolicy,
    pub min_words: usize,
    pub frequent_at: u64,
    /// Line-frequency table used for the repetition penalty, if present.
    pub line_table: Option<PathBuf>,
    pub remote: Option<RemoteConfig>,
}

impl Default for ClutterParams {
    fn default() -> Self {
        let gate = ClutterConfig::default();
        Self {
            threshold: gate.threshold,
            retry: gate.retry,
            min_words: 8,
            frequent_at: 10,
            line_table: None,
            remote: None,
        }
    }
}

impl ClutterParams {
    pub fn gate(&self) -> ClutterConfig {
        ClutterConfig {
            threshold: self.threshold,
            retry: self.retry,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityParams {
    pub gate: QualityConfig,
    pub heuristic: HeuristicQualityScorer,
    pub remote: Option<RemoteConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticParams {
    pub semantic: SemanticConfig,
    /// Dimension of the built-in mock embedder used when no remote is set.
    pub mock_dim: usize,
    pub collapse_duplicates: bool,
    pub cache: Option<PathBuf>,
    pub remote: Option<RemoteConfig>,
}

impl Default for SemanticParams {
    fn default() -> Self {
        Self {
            semantic: SemanticConfig::default(),
            mock_dim: 64,
            collapse_duplicates: true,
            cache: None,
            remote: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BalanceParams {
    pub balance: BalanceConfig,
    pub classifier: KeywordCategoryClassifier,
    pub remote: Option<RemoteConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StageParams {
    UrlFilter(UrlFilterParams),
    Langid(LangIdParams),
    ExactDedup(ExactParams),
    LineDedup(LineDedupParams),
    RuleFilter(RuleParams),
    FuzzyDedup(FuzzyParams),
    Webtype(WebTypeParams),
    Clutter(ClutterParams),
    Quality(QualityParams),
    SemanticDedup(SemanticParams),
    Balance(BalanceParams),
}

/// One configured stage. `seed` is the effective seed (stage override or the
/// global one); seeded stages carry it inside their parameters too. `hash`
/// is the digest of the canonical parameters and referenced file contents,
/// taken before relative paths are resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSpec {
    pub kind: StageKind,
    pub params: StageParams,
    pub seed: u64,
    pub hash: String,
}

impl StageSpec {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// Default parameters for `kind`.
    pub fn default_for(kind: StageKind, seed: u64) -> Result<Self> {
        Self::from_table(kind, toml::Table::new(), seed, Path::new("."))
    }

    /// Builds a stage from its parameter table (without the `name` key).
    pub fn from_table(kind: StageKind, mut t: toml::Table, global_seed: u64, base: &Path) -> Result<Self> {
        let stage = kind.name();
        let seed = match t.get("seed") {
            Some(v) => v
                .as_integer()
                .and_then(|i| u64::try_from(i).ok())
                .ok_or_else(|| Error::config(format!("{stage}: seed must be a non-negative integer")))?,
            None => global_seed,
        };
        let uses_seed = matches!(kind, StageKind::FuzzyDedup | StageKind::SemanticDedup | StageKind::Balance);
        if uses_seed {
            t.insert("seed".into(), toml::Value::Integer(seed as i64));
        } else if t.contains_key("seed") {
            return Err(Error::config(format!("{stage}: stage takes no seed")));
        }
        let params = match kind {
            StageKind::UrlFilter => StageParams::UrlFilter(rest(stage, t)?),
            StageKind::Langid => {
                let remote = take(stage, &mut t, "remote")?;
                StageParams::Langid(LangIdParams { gate: rest(stage, t)?, remote })
            }
            StageKind::ExactDedup => StageParams::ExactDedup(rest(stage, t)?),
            StageKind::LineDedup => {
                let table = take(stage, &mut t, "table")?;
                StageParams::LineDedup(LineDedupParams { config: rest(stage, t)?, table })
            }
            StageKind::RuleFilter => {
                let meta = take(stage, &mut t, "meta")?;
                StageParams::RuleFilter(RuleParams { rules: rest(stage, t)?, meta })
            }
            StageKind::FuzzyDedup => {
                let index = take(stage, &mut t, "index")?;
                StageParams::FuzzyDedup(FuzzyParams { lsh: rest(stage, t)?, index })
            }
            StageKind::Webtype => {
                let remote = take(stage, &mut t, "remote")?;
                let retry = take(stage, &mut t, "retry")?.unwrap_or_default();
                StageParams::Webtype(WebTypeParams { heuristic: rest(stage, t)?, retry, remote })
            }
            StageKind::Clutter => StageParams::Clutter(rest(stage, t)?),
            StageKind::Quality => {
                let remote = take(stage, &mut t, "remote")?;
                let mut gate = QualityConfig::default();
                if let Some(th) = take(stage, &mut t, "threshold")? {
                    gate.threshold = th;
                }
                if let Some(r) = take(stage, &mut t, "retry")? {
                    gate.retry = r;
                }
                StageParams::Quality(QualityParams { gate, heuristic: rest(stage, t)?, remote })
            }
            StageKind::SemanticDedup => {
                let d = SemanticParams::default();
                let remote = take(stage, &mut t, "remote")?;
                let cache = take(stage, &mut t, "cache")?;
                let mock_dim = take(stage, &mut t, "mock_dim")?.unwrap_or(d.mock_dim);
                let collapse_duplicates = take(stage, &mut t, "collapse_duplicates")?.unwrap_or(d.collapse_duplicates);
                StageParams::SemanticDedup(SemanticParams {
                    semantic: rest(stage, t)?,
                    mock_dim,
                    collapse_duplicates,
                    cache,
                    remote,
                })
            }
            StageKind::Balance => {
                let remote = take(stage, &mut t, "remote")?;
                let classifier = take(stage, &mut t, "classifier")?.unwrap_or_default();
                StageParams::Balance(BalanceParams { balance: rest(stage, t)?, classifier, remote })
            }
        };
        let mut spec = StageSpec {
            kind,
            params,
            seed,
            hash: String::new(),
        };
        spec.validate()?;
        spec.hash = spec.compute_hash(base)?;
        spec.resolve_paths(base);
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let stage = self.name();
        let wrap = |r: Result<()>| r.map_err(|e| Error::config(format!("{stage}: {e}")));
        match &self.params {
            StageParams::Langid(p) => wrap(p.gate.validate()),
            StageParams::LineDedup(p) => wrap(p.config.validate()),
            StageParams::RuleFilter(p) => wrap(p.rules.validate()),
            StageParams::FuzzyDedup(p) => wrap(p.lsh.validate()),
            StageParams::Clutter(p) => wrap(p.gate().validate()),
            StageParams::Quality(p) => wrap(p.gate.validate()),
            StageParams::SemanticDedup(p) => {
                wrap(p.semantic.validate())?;
                if p.mock_dim == 0 {
                    return wrap(Err(Error::config("mock_dim must be positive")));
                }
                Ok(())
            }
            StageParams::Balance(p) => {
                wrap(p.balance.validate())?;
                if p.balance.key == BalanceKey::Category && p.remote.is_none() {
                    let labels: HashSet<String> = p.classifier.categories.keys().cloned().chain(["other".to_string()]).collect();
                    if let Some(t) = p.balance.targets.keys().find(|t| !labels.contains(*t)) {
                        return wrap(Err(Error::config(format!("target {t:?} is not a classifier label"))));
                    }
                }
                Ok(())
            }
            StageParams::UrlFilter(_) | StageParams::ExactDedup(_) | StageParams::Webtype(_) => Ok(()),
        }
    }

    /// Files whose contents feed the stage's decisions.
    fn input_files(&self) -> Vec<&Path> {
        match &self.params {
            StageParams::UrlFilter(p) => p.blocklist.iter().map(PathBuf::as_path).collect(),
            StageParams::RuleFilter(p) => p
                .meta
                .iter()
                .filter_map(|m| m.domains_file.as_deref())
                .collect(),
            _ => Vec::new(),
        }
    }

    fn compute_hash(&self, base: &Path) -> Result<String> {
        let mut files = serde_json::Map::new();
        for f in self.input_files() {
            let path = base.join(f);
            let bytes = fs::read(&path).map_err(|e| Error::config(format!("{}: {}: {e}", self.name(), path.display())))?;
            files.insert(f.display().to_string(), hex::encode(Sha256::digest(&bytes)).into());
        }
        let canonical = serde_json::json!({
            "stage": self.name(),
            "params": serde_json::to_value(&self.params).expect("params serialize"),
            "files": files,
        });
        Ok(sha256_hex(canonical.to_string().as_bytes()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                *path = base.join(&*path);
            }
        };
        match &mut self.params {
            StageParams::UrlFilter(p) => fix(&mut p.blocklist),
            StageParams::ExactDedup(p) => fix(&mut p.history),
            StageParams::LineDedup(p) => fix(&mut p.table),
            StageParams::RuleFilter(p) => {
                if let Some(m) = &mut p.meta {
                    fix(&mut m.domains_file);
                }
            }
            StageParams::FuzzyDedup(p) => fix(&mut p.index),
            StageParams::Clutter(p) => fix(&mut p.line_table),
            StageParams::SemanticDedup(p) => fix(&mut p.cache),
            StageParams::Langid(_) | StageParams::Webtype(_) | StageParams::Quality(_) | StageParams::Balance(_) => {}
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn take<T: DeserializeOwned>(stage: &str, t: &mut toml::Table, key: &str) -> Result<Option<T>> {
    t.remove(key)
        .map(|v| v.try_into().map_err(|e| Error::config(format!("{stage}.{key}: {e}"))))
        .transpose()
}

fn rest<T: DeserializeOwned>(stage: &str, t: toml::Table) -> Result<T> {
    toml::Value::Table(t)
        .try_into()
        .map_err(|e| Error::config(format!("{stage}: {e}")))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: u64,
    workers: Option<usize>,
    input: Option<PathBuf>,
    work_dir: Option<PathBuf>,
    output: Option<PathBuf>,
    stages: Option<Vec<toml::Table>>,
}

/// A parsed pipeline file. Relative paths are resolved against the
/// directory containing the file.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub workers: Option<usize>,
    pub input: Option<PathBuf>,
    pub work_dir: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub stages: Vec<StageSpec>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Parses TOML text. Without a `[[stages]]` list every stage runs in
    /// default order with default parameters.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        if raw.workers == Some(0) {
            return Err(Error::config("workers must be at least 1"));
        }
        let tables = raw.stages.unwrap_or_else(|| {
            StageKind::DEFAULT_ORDER
                .iter()
                .map(|k| {
                    let mut t = toml::Table::new();
                    t.insert("name".into(), k.name().into());
                    t
                })
                .collect()
        });
        let mut seen = HashSet::new();
        let mut stages = Vec::with_capacity(tables.len());
        for mut t in tables {
            let name = match t.remove("name") {
                Some(toml::Value::String(s)) => s,
                _ => return Err(Error::config("every stage needs a string `name`")),
            };
            let kind: StageKind = name.parse()?;
            if !seen.insert(kind) {
                return Err(Error::config(format!("stage {name} listed twice")));
            }
            stages.push(StageSpec::from_table(kind, t, raw.seed, base)?);
        }
        let join = |p: Option<PathBuf>| p.map(|p| base.join(p));
        Ok(Self {
            seed: raw.seed,
            workers: raw.workers,
            input: join(raw.input),
            work_dir: join(raw.work_dir),
            output: join(raw.output),
            stages,
        })
    }

    pub fn stage(&self, kind: StageKind) -> Result<StageSpec> {
        match self.stages.iter().find(|s| s.kind == kind) {
            Some(s) => Ok(s.clone()),
            None => StageSpec::default_for(kind, self.seed),
        }
    }

    /// Worker count: the environment override, else the config, else the
    /// number of available cores.
    pub fn effective_workers(&self) -> Result<usize> {
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            return match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(Error::config(format!("{WORKERS_ENV}={v:?} is not a positive integer"))),
            };
        }
        Ok(self
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
    }
}
