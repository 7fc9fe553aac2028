//! Experiment harness: dataset generation, pretraining and training
//! commands, fraction sweeps, projected-Bellman audits and reports.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod commands;
pub mod config;
pub mod report;
pub mod runner;
pub mod svg;
pub mod sweep;

use std::path::{Path, PathBuf};

pub use config::{Algorithm, PretrainMode, Reduction, RunConfig, StepBudget, FRACTION_GRID};

/// Environment variable that relocates relative output paths.
pub const OUT_ENV: &str = "OQSEED_OUT";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] oqseed_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0} run(s) failed")]
    RunsFailed(usize),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

/// Resolve an output path: relative paths go under `$OQSEED_OUT` when set.
pub fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(root) if path.is_relative() && !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

/// Shortest round-trip decimal for floats, empty for missing values.
pub(crate) fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
