use std::fs;
use std::path::{Path, PathBuf};

use refinery_core::pipeline::{
    build_report, load_manifests, render_text, run_pipeline, run_stage, PipelineConfig, StageKind, StageManifest,
    StagePaths, StageSpec,
};

const ARTICLE: &str = "The council met on Tuesday evening to discuss the plan for the old market square. \
Residents asked many questions about the cost of the work and the time it would take to finish. \
The mayor said that the repairs would begin in the spring and that the budget had been approved \
by a large majority of the members who were present at the meeting that night.";

fn write_corpus(dir: &Path) -> PathBuf {
    let mut lines = Vec::new();
    for i in 0..20 {
        let text = format!("Item {i} in the series.\n{ARTICLE} Story number {i} ends here.");
        lines.push(serde_json::json!({"id": format!("a{i}"), "url": format!("https://site.example/{i}"), "text": text}).to_string());
    }
    lines.push(serde_json::json!({"id": "dup", "text": format!("ITEM 3 IN THE SERIES!\n{} STORY NUMBER 3 ENDS HERE", ARTICLE.to_uppercase())}).to_string());
    lines.push("{not json".into());
    lines.push(serde_json::json!({"id": "blocked", "url": "http://ads.blocked.test/x", "text": ARTICLE}).to_string());
    let path = dir.join("in.jsonl");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

fn config(dir: &Path, stages: &str) -> PipelineConfig {
    let input = write_corpus(dir);
    let text = format!(
        "seed = 3\ninput = {:?}\nwork_dir = {:?}\noutput = {:?}\n{stages}",
        input,
        dir.join("work"),
        dir.join("final.jsonl")
    );
    PipelineConfig::parse(&text, dir).unwrap()
}

const THREE: &str = r#"
[[stages]]
name = "url_filter"
domains = ["blocked.test"]

[[stages]]
name = "exact_dedup"

[[stages]]
name = "rule_filter"
"#;

#[test]
fn chain_counts_malformed_and_conserves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), THREE);
    let run = run_pipeline(&cfg, false).unwrap();
    let stages: Vec<&str> = run.manifests.iter().map(|m| m.stage.as_str()).collect();
    assert_eq!(stages, ["url_filter", "exact_dedup", "rule_filter"]);

    let first = &run.manifests[0];
    assert_eq!(first.stats.docs_in, 23);
    assert_eq!(first.stats.drops.get("malformed"), Some(&1));
    assert_eq!(first.stats.drops.get("url_blocklist"), Some(&1));
    assert_eq!(run.manifests[1].stats.drops.get("exact_dup"), Some(&1));
    for m in &run.manifests {
        assert!(m.stats.is_conserved(), "{}", m.stage);
    }
    for w in run.manifests.windows(2) {
        assert_eq!(w[1].stats.docs_in, w[0].stats.docs_out);
    }

    let out = fs::read_to_string(dir.path().join("final.jsonl")).unwrap();
    assert_eq!(out.lines().count() as u64, run.manifests[2].stats.docs_out);
    let rejects = fs::read_to_string(dir.path().join("work/rejects/02-exact_dedup.jsonl")).unwrap();
    assert!(rejects.contains("\"dup\"") && rejects.contains("drop:exact_dup"));
}

#[test]
fn resume_skips_matching_prefix_and_reruns_the_rest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), THREE);
    run_pipeline(&cfg, false).unwrap();

    let again = run_pipeline(&cfg, true).unwrap();
    assert_eq!(again.skipped, ["url_filter", "exact_dedup", "rule_filter"]);

    let mut cfg2 = cfg.clone();
    cfg2.stages[2] = StageSpec::from_table(
        StageKind::RuleFilter,
        toml::from_str("min_words = 10").unwrap(),
        3,
        dir.path(),
    )
    .unwrap();
    let partial = run_pipeline(&cfg2, true).unwrap();
    assert_eq!(partial.skipped, ["url_filter", "exact_dedup"]);

    fs::write(dir.path().join("work/data/01-url_filter.jsonl"), "").unwrap();
    let broken = run_pipeline(&cfg2, true).unwrap();
    assert!(broken.skipped.is_empty(), "a corrupted output must not be reused");
}

#[test]
fn failed_stage_removes_its_output_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), THREE);
    run_pipeline(&cfg, false).unwrap();
    let manifest = dir.path().join("work/manifests/03-rule_filter.json");
    assert!(manifest.exists());

    let blocklist = dir.path().join("bl.txt");
    fs::write(&blocklist, "blocked.test\n").unwrap();
    let mut table = toml::Table::new();
    table.insert("blocklist".into(), blocklist.display().to_string().into());
    cfg.stages[0] = StageSpec::from_table(StageKind::UrlFilter, table, 3, dir.path()).unwrap();
    fs::remove_file(&blocklist).unwrap();
    assert!(run_pipeline(&cfg, false).is_err());
    assert!(!dir.path().join("work/manifests/01-url_filter.json").exists());
    assert!(!dir.path().join("work/data/01-url_filter.jsonl").exists());
}

#[test]
fn single_stage_writes_beside_output_and_report_reads_it() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_corpus(dir.path());
    let spec = StageSpec::default_for(StageKind::ExactDedup, 0).unwrap();
    let out = dir.path().join("stage/out.jsonl");
    let paths = StagePaths::beside(&input, &out);
    let m = run_stage(&spec, &paths, 2).unwrap();
    assert_eq!(StageManifest::load(&paths.manifest).unwrap(), m);
    assert!(paths.timing.exists() && paths.rejects.exists());

    let loaded = load_manifests(&dir.path().join("stage")).unwrap();
    assert_eq!(loaded, vec![m.clone()]);
    let report = build_report(&loaded);
    assert!((report.funnel[0].dedup_ratio.unwrap() - 2.0 / 23.0).abs() < 1e-12);
    assert!(render_text(&report).contains("exact_dup"));

    let missing = StagePaths::beside(dir.path().join("nope.jsonl"), &out);
    let err = run_stage(&spec, &missing, 1).unwrap_err();
    assert!(err.is_usage());
}

#[test]
fn manifests_carry_no_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), THREE);
    run_pipeline(&cfg, false).unwrap();
    let text = fs::read_to_string(dir.path().join("work/manifests/01-url_filter.json")).unwrap();
    assert!(!text.contains("wall_time"));
    let timing = fs::read_to_string(dir.path().join("work/timing/01-url_filter.timing.json")).unwrap();
    assert!(timing.contains("wall_time_ms"));
}
