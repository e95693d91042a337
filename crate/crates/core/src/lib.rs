//! Stages for cleaning and deduplicating a mixed-language web corpus.
//!
//! Every stage reads [`Document`]s and returns one [`Outcome`] per input
//! document, so counts can be reconciled across the whole pipeline.

pub mod document;
pub mod error;
pub mod exact;
pub mod fuzzy;
pub mod ingest;
pub mod langid;
pub mod line_dedup;
pub mod pipeline;
pub mod provider;
pub mod quality;
pub mod remote;
pub mod rules;
pub mod semantic;
pub mod text;

pub use document::{Document, Outcome, StageStats, TraceEntry, Verdict};
pub use error::{Error, ProviderError, Result};
pub use fuzzy::{detection_probability, LshParams, MinHashSignature, MinHasher};
pub use pipeline::{PipelineConfig, StageKind, StageManifest, StageSpec};
pub use provider::RetryPolicy;
pub use text::{normalize_text, NormalizedText};
