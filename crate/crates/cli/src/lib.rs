//! Pipeline orchestration behind the `textsep` binary.

pub mod config;
pub mod error;
pub mod eval;
pub mod mixgen;
pub mod pipeline;
pub mod train;

pub use config::{PipelineConfig, Preset, TrainJob, SCHEMA_VERSION};
pub use error::CliError;
pub use eval::{run_eval_dirs, run_eval_manifests, Estimator, ReportFile};
pub use mixgen::{run_mixgen, MixgenIndex, MixgenOptions};
pub use pipeline::{run_parse, run_separation, RunManifest, RunOutcome, RunStatus, Stage};
pub use train::{run_train, TrainOutput};
