//! Crate-wide error type with stable, machine-readable categories.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("empty sequence: {0}")]
    EmptySequence(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),

    #[error("sequence did not reach the end action within {max_len} steps")]
    Truncated { max_len: usize },

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error("convergence failure: {0}")]
    ConvergenceFailure(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unsupported format: {0}")]
    Format(String),
}

impl Error {
    /// Stable kebab-case category name, used by the CLI for exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::InvalidConfig(_) => "invalid-config",
            Error::InsufficientData(_) => "insufficient-data",
            Error::EmptySequence(_) => "empty-sequence",
            Error::EmptyDataset(_) => "empty-dataset",
            Error::VocabularyMismatch(_) => "vocabulary-mismatch",
            Error::Truncated { .. } => "truncation",
            Error::TrainingDiverged(_) => "training-diverged",
            Error::ConvergenceFailure(_) => "convergence-failure",
            Error::UndefinedCorrelation(_) => "undefined-correlation",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::InvalidTable(_) => "invalid-table",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Format(_) => "format",
        }
    }
}
