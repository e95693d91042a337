use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use refinery_core::fuzzy::detection_probability;
use refinery_core::ingest::{read_jsonl_file, write_records};
use refinery_core::line_dedup::{apply_line_dedup, build_frequency_table, LineDedupConfig, LineFrequencyTable};
use refinery_core::pipeline::{
    build_report, load_manifests, render_text, run_pipeline, run_stage, with_workers, StageKind, StageManifest,
    StagePaths, StageSpec,
};
use refinery_core::{Document, PipelineConfig, StageStats};

#[derive(Parser)]
#[command(name = "refinery", version, about = "Clean, filter and deduplicate a JSONL web corpus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured stage in order.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Reuse stages whose manifests still match their config and input.
        #[arg(long)]
        resume: bool,
        /// Thread count; the REFINERY_WORKERS environment variable wins.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run a single stage with the parameters it has in the config file.
    Stage {
        name: StageKind,
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Summarize the manifests in a directory as a funnel.
    Report {
        manifest_dir: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Probability that a pair with Jaccard similarity `s` shares an LSH band.
    LshProb {
        #[arg(long)]
        s: f64,
        #[arg(long, default_value_t = 128)]
        bands: usize,
        #[arg(long, default_value_t = 16)]
        rows: usize,
    },
    /// Count or remove boilerplate lines repeated across documents.
    LineDedup {
        #[command(subcommand)]
        action: LineDedupAction,
    },
    /// MinHash/LSH near-duplicate removal with explicit parameters.
    FuzzyDedup(FuzzyArgs),
}

#[derive(Subcommand)]
enum LineDedupAction {
    /// Add head/tail line counts from input files to a frequency table.
    Count {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value_t = 5)]
        head: usize,
        #[arg(long, default_value_t = 5)]
        tail: usize,
        #[arg(long, default_value_t = 200)]
        cap: u64,
    },
    /// Remove over-cap lines using a table built by `count`.
    Apply {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long)]
        table: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    PerBucket,
    Component,
}

#[derive(Args)]
struct FuzzyArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
    #[arg(long, default_value_t = 2048)]
    hashes: usize,
    #[arg(long, default_value_t = 128)]
    bands: usize,
    #[arg(long, default_value_t = 16)]
    rows: usize,
    /// Word n-gram size for shingles.
    #[arg(long, default_value_t = 5)]
    ngram: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Policy::PerBucket)]
    policy: Policy,
    /// Directory holding band buckets from earlier batches.
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.chain().any(|c| {
                c.downcast_ref::<refinery_core::Error>().is_some_and(refinery_core::Error::is_usage)
            });
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}

/// Worker count for commands without a config file.
fn workers(flag: Option<usize>) -> Result<usize> {
    let cfg = PipelineConfig {
        seed: 0,
        workers: flag,
        input: None,
        work_dir: None,
        output: None,
        stages: Vec::new(),
    };
    Ok(cfg.effective_workers()?)
}

fn summary(m: &StageManifest) -> String {
    format!(
        "{}: {} in, {} out, {} dropped",
        m.stage,
        m.stats.docs_in,
        m.stats.docs_out,
        m.stats.dropped()
    )
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, resume, workers } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if workers.is_some() {
                cfg.workers = workers;
            }
            let run = run_pipeline(&cfg, resume)?;
            for name in &run.skipped {
                eprintln!("{name}: reused previous result");
            }
            print!("{}", render_text(&build_report(&run.manifests)));
            println!("output: {}", run.output.display());
        }
        Command::Stage {
            name,
            config,
            input,
            output,
            workers,
        } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if workers.is_some() {
                cfg.workers = workers;
            }
            let spec = cfg.stage(name)?;
            let n = cfg.effective_workers()?;
            let m = with_workers(n, || run_stage(&spec, &StagePaths::beside(input, output), n))??;
            println!("{}", summary(&m));
        }
        Command::Report { manifest_dir, json } => {
            let manifests = load_manifests(&manifest_dir)?;
            if manifests.is_empty() {
                bail!(refinery_core::Error::config(format!("no manifests in {}", manifest_dir.display())));
            }
            let report = build_report(&manifests);
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", render_text(&report));
            }
        }
        Command::LshProb { s, bands, rows } => {
            println!("{:.6}", detection_probability(s, bands, rows)?);
        }
        Command::LineDedup { action } => line_dedup(action)?,
        Command::FuzzyDedup(args) => fuzzy(args)?,
    }
    Ok(())
}

fn write_jsonl(path: &Path, docs: &[Document]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    write_records(&mut w, docs)?;
    w.flush()?;
    Ok(())
}

fn line_dedup(action: LineDedupAction) -> Result<()> {
    match action {
        LineDedupAction::Count {
            inputs,
            table,
            head,
            tail,
            cap,
        } => {
            let cfg = LineDedupConfig {
                head_lines: head,
                tail_lines: tail,
                frequency_cap: cap,
            };
            cfg.validate()?;
            let mut freq = if table.exists() {
                LineFrequencyTable::load(&table, &cfg)?
            } else {
                LineFrequencyTable::default()
            };
            for path in &inputs {
                let (docs, _) = read_jsonl_file(path)?;
                freq.merge(build_frequency_table(&docs, &cfg));
            }
            freq.save(&table, &cfg)?;
            let over = freq.iter().filter(|(_, c)| c.global > cap).count();
            println!("{} distinct lines, {over} over the cap of {cap}", freq.len());
        }
        LineDedupAction::Apply { input, output, table } => {
            let (mut freq, cfg) = LineFrequencyTable::load_any(&table)?;
            let (docs, malformed) = read_jsonl_file(&input)?;
            let mut stats = StageStats::default();
            for _ in &malformed {
                stats.record_malformed(0);
            }
            let mut kept = Vec::new();
            let mut rejected = Vec::new();
            for o in apply_line_dedup(docs, &mut freq, &cfg) {
                stats.record(&o.verdict, 0, 0);
                if o.verdict.keep {
                    kept.push(o.doc);
                } else {
                    rejected.push(o.doc);
                }
            }
            write_jsonl(&output, &kept)?;
            let mut rejects = output.clone().into_os_string();
            rejects.push(".rejects.jsonl");
            write_jsonl(Path::new(&rejects), &rejected)?;
            freq.save(&table, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
    }
    Ok(())
}

fn fuzzy(args: FuzzyArgs) -> Result<()> {
    let mut t = toml::Table::new();
    let int = |v: usize| toml::Value::Integer(v as i64);
    t.insert("num_hashes".into(), int(args.hashes));
    t.insert("bands".into(), int(args.bands));
    t.insert("rows".into(), int(args.rows));
    t.insert("shingle_n".into(), int(args.ngram));
    let policy = match args.policy {
        Policy::PerBucket => "per_bucket",
        Policy::Component => "component",
    };
    t.insert("policy".into(), policy.into());
    if let Some(dir) = &args.index {
        t.insert("index".into(), dir.display().to_string().into());
    }
    let spec = StageSpec::from_table(StageKind::FuzzyDedup, t, args.seed, Path::new("."))?;
    let n = workers(args.workers)?;
    let m = with_workers(n, || run_stage(&spec, &StagePaths::beside(args.input, args.output), n))??;
    println!("{}", summary(&m));
    Ok(())
}
