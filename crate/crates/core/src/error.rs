use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the reconstruction toolkit.
#[derive(Debug, Error)]
pub enum BcsError {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),

    #[error("degenerate factor at basis index {index}: alpha equals the cached sparseness factor")]
    DegenerateFactor { index: usize },

    #[error("insufficient measurements: K = {k}, need {needed}")]
    InsufficientMeasurements { k: usize, needed: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("posterior variance undefined: a0' = {a0_post} <= 1")]
    UndefinedVariance { a0_post: f64 },

    #[error("all measurements lost")]
    EmptyMeasurement,

    #[error("ratio undefined: reference vector has zero energy")]
    UndefinedRatio,

    #[error("invalid energy fraction {0}: must lie in [0, 1)")]
    InvalidFraction(f64),

    #[error("empty sample")]
    EmptySample,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl BcsError {
    /// Whether the error stems from numerics rather than from inputs or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            BcsError::IllConditioned(_)
                | BcsError::DegenerateFactor { .. }
                | BcsError::DegenerateData(_)
                | BcsError::NumericalBreakdown(_)
                | BcsError::UndefinedVariance { .. }
                | BcsError::InsufficientMeasurements { .. }
                | BcsError::EmptyMeasurement
                | BcsError::UndefinedRatio
        )
    }
}

pub type Result<T> = std::result::Result<T, BcsError>;
