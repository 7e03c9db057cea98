//! Crate-wide error type.

use std::path::PathBuf;

use crate::analysis::Modality;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("style dimension {dim} has deviation {sigma:e}; the style sample set lacks diversity")]
    DegenerateStats { dim: usize, sigma: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("encoder failed: {0}")]
    EncoderFailure(String),

    #[error("no embedding centers fall in [{start_s}, {end_s})")]
    EmptyRange { start_s: f64, end_s: f64 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("generator backend failed: {0}")]
    BackendFailure(String),

    #[error("rank deficient{}: {found} nonzero eigenvalues, {needed} required", modality_suffix(.modality))]
    RankDeficient {
        modality: Option<Modality>,
        found: usize,
        needed: usize,
    },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("segment {label:?} has {n_frames} frames, at least 2 required")]
    DegenerateSegment { label: String, n_frames: usize },

    #[error("malformed file {}: {reason}", .path.display())]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn modality_suffix(m: &Option<Modality>) -> String {
    match m {
        Some(m) => format!(" ({m} side)"),
        None => String::new(),
    }
}

impl Error {
    /// Stable machine-readable identifier, printed by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape(_) => "ShapeError",
            Error::DegenerateStats { .. } => "DegenerateStats",
            Error::NonFinite(_) => "NonFinite",
            Error::EmptyDataset => "EmptyDataset",
            Error::FileNotFound(_) => "FileNotFound",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::EncoderFailure(_) => "EncoderFailure",
            Error::EmptyRange { .. } => "EmptyRange",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::BackendFailure(_) => "BackendFailure",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::LengthMismatch(_) => "LengthMismatch",
            Error::DegenerateSegment { .. } => "DegenerateSegment",
            Error::Format { .. } => "FormatError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
