use thiserror::Error;

/// Errors raised while ingesting data, building design matrices, fitting or ranking.
#[derive(Debug, Error)]
pub enum CnmaError {
    #[error("invalid treatment label {label:?}: {reason}")]
    InvalidLabel { label: String, reason: String },

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error("line {line}: {message}")]
    BadRecord { line: u64, message: String },

    #[error("no contrasts")]
    NoContrasts,

    #[error("study {study}: {message}")]
    Study { study: String, message: String },

    #[error("unknown parameter {0:?}")]
    UnknownParameter(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("cannot encode {label:?}: {reason}")]
    Encoding { label: String, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("invalid samples: {0}")]
    Samples(String),

    #[error("invalid question: {0}")]
    Question(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CnmaError>;
