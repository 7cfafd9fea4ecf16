use thiserror::Error;

/// Numeric and contract errors raised by the library modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is rank deficient (smallest singular value {smallest:e})")]
    RankDeficient { smallest: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("rank mismatch: {left} vs {right}")]
    RankMismatch { left: usize, right: usize },

    #[error("geodesic is not unique: principal angle {angle} is at or beyond pi/2")]
    DegenerateGeodesic { angle: f64 },

    #[error("raw-sum affinity row {row} is degenerate (row similarity sum {sum:e})")]
    DegenerateRow { row: usize, sum: f64 },

    #[error("alpha {0} is outside [0, 1]")]
    AlphaOutOfRange(f64),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("rank parameter {r} must satisfy 1 <= r < {limit}")]
    RankParamInvalid { r: usize, limit: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
