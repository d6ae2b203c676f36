use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("bad model file: {0}")]
    Format(String),

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable code, used as the process exit status by the CLI.
    pub fn code(&self) -> i32 {
        match self {
            Error::Dimension(_) => 10,
            Error::NonFinite(_) => 11,
            Error::Config(_) => 12,
            Error::LabelOutOfRange { .. } => 13,
            Error::InsufficientData(_) => 14,
            Error::Divergence(_) => 15,
            Error::Parse { .. } => 16,
            Error::Format(_) => 17,
            Error::MissingArtifact(_) => 18,
            Error::Degenerate(_) => 19,
            Error::Io(_) => 20,
            Error::Json(_) => 21,
            Error::Csv(_) => 22,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::Config(_) => "config",
            Error::LabelOutOfRange { .. } => "label_out_of_range",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Divergence(_) => "divergence",
            Error::Parse { .. } => "parse",
            Error::Format(_) => "format",
            Error::MissingArtifact(_) => "missing_artifact",
            Error::Degenerate(_) => "degenerate",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
