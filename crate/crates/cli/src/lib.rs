//! Command implementations behind the `cvqkd` binary.
//!
//! Every command resolves one [`LinkConfig`], writes its data files and a
//! JSON record embedding that config and its hash. Outputs depend only on
//! the config, so reruns are byte-identical.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use cvqkd::pipeline::{LinkConfig, PipelineError};
use cvqkd::reconciliation::ReconciliationError;
use cvqkd::security::SecurityError;
use thiserror::Error;

/// Variable that relocates the output directory when `--out-dir` is absent.
pub const OUT_DIR_ENV: &str = "CVQKD_OUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    /// Already prefixed with the failing stage.
    #[error("{0}")]
    Pipeline(#[from] PipelineError),
    #[error("security: {0}")]
    Security(#[from] SecurityError),
    #[error("reconciliation: {0}")]
    Reconciliation(#[from] ReconciliationError),
    #[error("reconciliation: {path}: {source}")]
    CodeFile { path: PathBuf, source: std::io::Error },
    #[error("output: {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

/// Shared inputs of every command.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: LinkConfig,
    pub out_dir: PathBuf,
    pub exec: cvqkd::par::Execution,
}

/// Output directory: the flag, then [`OUT_DIR_ENV`], then `out`.
pub fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"))
}
