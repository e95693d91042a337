use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{sha256_hex, PipelineConfig, StageSpec};
use super::manifest::{StageManifest, StageTiming, TIMING_SUFFIX};
use super::stages::execute;
use crate::document::{Document, StageStats};
use crate::error::{Error, Result};
use crate::ingest::{read_jsonl_file, write_records, Record};

/// Where one stage reads and writes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagePaths {
    pub input: PathBuf,
    pub output: PathBuf,
    pub manifest: PathBuf,
    pub rejects: PathBuf,
    pub timing: PathBuf,
}

impl StagePaths {
    /// Manifest, rejects and timing next to `output`.
    pub fn beside(input: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        let output = output.into();
        let with = |suffix: &str| {
            let mut p = output.as_os_str().to_owned();
            p.push(suffix);
            PathBuf::from(p)
        };
        Self {
            input: input.into(),
            manifest: with(".manifest.json"),
            rejects: with(".rejects.jsonl"),
            timing: with(TIMING_SUFFIX),
            output,
        }
    }

    /// Layout used by [`run_pipeline`]: `data/`, `manifests/`, `rejects/`
    /// and `timing/` under the work directory, files named `NN-stage`.
    pub fn in_work_dir(work_dir: &Path, index: usize, spec: &StageSpec, input: PathBuf) -> Self {
        let stem = format!("{:02}-{}", index + 1, spec.name());
        Self {
            input,
            output: work_dir.join("data").join(format!("{stem}.jsonl")),
            manifest: work_dir.join("manifests").join(format!("{stem}.json")),
            rejects: work_dir.join("rejects").join(format!("{stem}.jsonl")),
            timing: work_dir.join("timing").join(format!("{stem}{TIMING_SUFFIX}")),
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn encode(docs: &[Document]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_records(&mut buf, docs).expect("writing to memory");
    buf
}

fn remove_if_exists(path: &Path) {
    let _ = fs::remove_file(path);
}

/// Runs one stage from `paths.input` to `paths.output`.
///
/// Output, rejects and manifest are each written through a temporary file
/// and renamed into place. On failure any previous output and manifest at
/// those paths are removed so a later resume cannot pick them up.
pub fn run_stage(spec: &StageSpec, paths: &StagePaths, workers: usize) -> Result<StageManifest> {
    if !paths.input.is_file() {
        return Err(Error::config(format!("input {} not found", paths.input.display())));
    }
    let result = run_stage_inner(spec, paths, workers);
    if result.is_err() {
        remove_if_exists(&paths.output);
        remove_if_exists(&paths.manifest);
    }
    result
}

fn run_stage_inner(spec: &StageSpec, paths: &StagePaths, workers: usize) -> Result<StageManifest> {
    let started = Instant::now();
    let input_bytes = fs::read(&paths.input).map_err(|e| Error::io(&paths.input, e))?;
    let input_checksum = sha256_hex(&input_bytes);
    drop(input_bytes);
    let (docs, malformed) = read_jsonl_file(&paths.input)?;

    let mut stats = StageStats::default();
    for m in &malformed {
        if let Record::Malformed { bytes, .. } = m {
            stats.record_malformed(*bytes);
        }
    }
    let bytes_in: HashMap<u64, u64> = docs.iter().map(|d| (d.seq, d.text.len() as u64)).collect();

    let result = execute(spec, docs)?;
    let mut outcomes = result.outcomes;
    outcomes.sort_by_key(|o| o.doc.seq);

    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for o in outcomes {
        let action = o.trace_action();
        stats.record(&o.verdict, bytes_in.get(&o.doc.seq).copied().unwrap_or(0), o.doc.text.len() as u64);
        let mut doc = o.doc;
        doc.push_trace(spec.name(), action);
        if o.verdict.keep {
            kept.push(doc);
        } else {
            rejected.push(doc);
        }
    }
    if !stats.is_conserved() {
        return Err(Error::Stage {
            stage: spec.name().into(),
            message: "document counts do not add up".into(),
        });
    }

    let out_bytes = encode(&kept);
    let manifest = StageManifest {
        stage: spec.name().into(),
        config_hash: spec.hash.clone(),
        seed: spec.seed,
        stats,
        input_checksum,
        output_checksum: sha256_hex(&out_bytes),
        extra: result.extra,
    };
    write_atomic(&paths.output, &out_bytes)?;
    write_atomic(&paths.rejects, &encode(&rejected))?;
    write_atomic(&paths.manifest, manifest.to_json().as_bytes())?;
    let timing = StageTiming {
        stage: spec.name().into(),
        wall_time_ms: started.elapsed().as_millis(),
        workers,
    };
    let timing_json = serde_json::to_string_pretty(&timing).expect("timing serializes");
    write_atomic(&paths.timing, timing_json.as_bytes())?;
    Ok(manifest)
}

fn file_checksum(path: &Path) -> Option<String> {
    fs::read(path).ok().map(|b| sha256_hex(&b))
}

/// A stage can be skipped when its manifest was produced by the same
/// configuration from the same input bytes and its output is intact.
fn reusable(spec: &StageSpec, paths: &StagePaths) -> Option<StageManifest> {
    let m = StageManifest::load(&paths.manifest).ok()?;
    let same = m.config_hash == spec.hash
        && file_checksum(&paths.input)? == m.input_checksum
        && file_checksum(&paths.output)? == m.output_checksum;
    same.then_some(m)
}

/// Runs `f` on a thread pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Per-stage outcome of [`run_pipeline`].
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub manifests: Vec<StageManifest>,
    /// Names of stages whose previous results were reused.
    pub skipped: Vec<String>,
    pub output: PathBuf,
}

/// Runs every configured stage in order, each reading the previous stage's
/// output.
///
/// With `resume`, leading stages whose manifests still match are reused;
/// once one stage reruns, every later stage reruns too. A failing stage
/// stops the chain and leaves earlier outputs in place.
pub fn run_pipeline(cfg: &PipelineConfig, resume: bool) -> Result<PipelineRun> {
    let input = cfg.input.clone().ok_or_else(|| Error::config("config has no `input`"))?;
    let work_dir = cfg.work_dir.clone().ok_or_else(|| Error::config("config has no `work_dir`"))?;
    if !input.is_file() {
        return Err(Error::config(format!("input {} not found", input.display())));
    }
    if cfg.stages.is_empty() {
        return Err(Error::config("no stages configured"));
    }
    let workers = cfg.effective_workers()?;
    with_workers(workers, || {
        let mut manifests = Vec::new();
        let mut skipped = Vec::new();
        let mut current = input;
        let mut rerun = !resume;
        for (i, spec) in cfg.stages.iter().enumerate() {
            let paths = StagePaths::in_work_dir(&work_dir, i, spec, current);
            let reused = if rerun { None } else { reusable(spec, &paths) };
            let manifest = match reused {
                Some(m) => {
                    skipped.push(spec.name().to_string());
                    m
                }
                None => {
                    rerun = true;
                    run_stage(spec, &paths, workers)?
                }
            };
            manifests.push(manifest);
            current = paths.output;
        }
        if let Some(out) = &cfg.output {
            let bytes = fs::read(&current).map_err(|e| Error::io(&current, e))?;
            write_atomic(out, &bytes)?;
        }
        Ok(PipelineRun {
            manifests,
            skipped,
            output: cfg.output.clone().unwrap_or(current),
        })
    })?
}
