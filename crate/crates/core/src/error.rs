use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by ingestion, validation and the diagnostic kernels.
#[derive(Debug, Error)]
pub enum DiagError {
    #[error("need at least 4 draws per chain to split, got {0}")]
    TooFewDraws(usize),

    #[error("need at least {required} chains, got {found}")]
    TooFewChains { required: usize, found: usize },

    #[error("chain {chain} has {found} draws, expected {expected}")]
    RaggedChain {
        chain: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in parameter `{parameter}` (chain {chain}, draw {draw})")]
    NonFinite {
        parameter: String,
        chain: usize,
        draw: usize,
    },

    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),

    #[error("unknown parameter `{name}`; available: {available}")]
    UnknownParameter { name: String, available: String },

    #[error("empty draws: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot form {k} intervals from {draws} draws")]
    TooManyIntervals { k: usize, draws: usize },

    #[error("beta quantile did not converge (p={p}, shapes {a}, {b})")]
    BetaQuantile { p: f64, a: f64, b: f64 },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = DiagError> = std::result::Result<T, E>;
