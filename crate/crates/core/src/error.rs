use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the audit pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("unknown column `{column}` in {path}")]
    UnknownColumn { path: PathBuf, column: String },

    #[error("missing required column `{column}` in {path}")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("{path}: row {row}: {message}")]
    Ingest {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("variable `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("degenerate computation: {0}")]
    Degenerate(String),

    #[error("rank-deficient design matrix; collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("objective evaluation failed for {spec}: {source}")]
    Objective {
        spec: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used in CLI error files.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema(_) | Error::UnknownColumn { .. } | Error::MissingColumn { .. } => "schema",
            Error::Parse { .. } | Error::Ingest { .. } => "ingest",
            Error::InvalidInput(_) => "invalid_input",
            Error::ZeroVariance(_) => "zero_variance",
            Error::Degenerate(_) => "degenerate",
            Error::RankDeficient(_) => "rank_deficient",
            Error::Objective { .. } => "objective",
            Error::Io(_) => "io",
            Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
