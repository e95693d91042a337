//! Stage orchestration: configuration, manifests, resumable runs and reports.
//!
//! Stages exchange line-delimited JSON files in the same record shape as the
//! raw input, so any stage can be run on its own.

mod config;
mod manifest;
mod run;
mod stages;

pub use config::{
    sha256_hex, BalanceParams, ClutterParams, ExactParams, FuzzyParams, LangIdParams, LineDedupParams,
    MetaParams, PipelineConfig, QualityParams, RuleParams, SemanticParams, StageKind, StageParams, StageSpec,
    UrlFilterParams, WebTypeParams, WORKERS_ENV,
};
pub use manifest::{build_report, load_manifests, render_text, FunnelRow, Report, StageManifest, StageTiming};
pub use run::{run_pipeline, run_stage, with_workers, PipelineRun, StagePaths};
pub use stages::{execute, StageResult};
