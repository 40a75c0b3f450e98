//! Error type shared across the pipeline.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A required CSV column could not be resolved.
    #[error("schema error: missing column '{column}'")]
    Schema { column: String },

    /// A cell failed to parse as the expected type.
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// Channel lengths disagree within one recording group.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Invalid configuration value or combination.
    #[error("config error: {0}")]
    Config(String),

    /// Tensor shape does not match what the operation requires.
    #[error("shape error: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    /// A model could not be assembled from its config.
    #[error("build error in layer '{layer}': {message}")]
    Build { layer: String, message: String },

    /// Not enough subjects/windows to honor a split or sampling request.
    #[error("sizing error: {0}")]
    Sizing(String),

    /// A pair-sampling request cannot be satisfied.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// A caller violated a stated precondition (frozen flags, balance, leakage).
    #[error("contract error: {0}")]
    Contract(String),

    /// A metric is undefined for the given inputs (e.g. single-class AUC).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A loss component or intermediate value became non-finite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Training diverged; the model was restored to the last good checkpoint.
    #[error("training diverged at epoch {epoch}; model restored to best checkpoint from epoch {last_good}")]
    Diverged { epoch: usize, last_good: usize },

    /// Checkpoint container could not be read or does not match.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
