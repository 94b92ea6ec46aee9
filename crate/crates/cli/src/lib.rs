//! Batch driver for the numerical experiments of `pseudop-core`: configuration
//! parsing, orchestration, and JSON/CSV/SVG report emission.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, ConfigError, Experiment, ExperimentConfig, Kind};
pub use run::{run, Check, Outcome, RunContext};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] pseudop_core::Error),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV serialization failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Setup(String),
}
