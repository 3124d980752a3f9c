use thiserror::Error;

use crate::solvers::DegeneracyFlag;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no real distortion root: point lies outside the invertible domain of the division model")]
    NoRealRoot,
    #[error("homogeneous coordinate vanished during rectification (|alpha| = {0:e})")]
    DegenerateAlpha(f64),
    #[error("affine frame points are collinear (|det| = {0:e})")]
    CollinearFrame(f64),
    #[error("all frame coordinates are zero")]
    AllZeroCoordinates,
    #[error("wrong sample size: expected {expected} frames, got {got}")]
    WrongSampleSize { expected: usize, got: usize },
    #[error("infeasible monomial basis: {0}")]
    InfeasibleBasis(String),
    #[error("elimination template is rank deficient for this input")]
    RankDeficientTemplate,
    #[error("system does not match template: {0}")]
    ShapeMismatch(String),
    #[error("degenerate sample: {0:?}")]
    DegenerateSample(Vec<DegeneracyFlag>),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no valid model found")]
    NoValidModel,
    #[error("scene generation failed after {0} attempts")]
    RetryExhausted(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported file version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("missing template for configuration {0}")]
    MissingTemplate(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable identifier, also used by the CLI and the C API.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NoRealRoot => "NO_REAL_ROOT",
            Error::DegenerateAlpha(_) => "DEGENERATE_ALPHA",
            Error::CollinearFrame(_) => "COLLINEAR_FRAME",
            Error::AllZeroCoordinates => "ALL_ZERO_COORDINATES",
            Error::WrongSampleSize { .. } => "WRONG_SAMPLE_SIZE",
            Error::InfeasibleBasis(_) => "INFEASIBLE_BASIS",
            Error::RankDeficientTemplate => "RANK_DEFICIENT_TEMPLATE",
            Error::ShapeMismatch(_) => "SHAPE_MISMATCH",
            Error::DegenerateSample(_) => "DEGENERATE_SAMPLE",
            Error::InsufficientData(_) => "INSUFFICIENT_DATA",
            Error::NoValidModel => "NO_VALID_MODEL",
            Error::RetryExhausted(_) => "RETRY_EXHAUSTED",
            Error::InvalidInput(_) => "INVALID_INPUT",
            Error::UnsupportedVersion { .. } => "UNSUPPORTED_VERSION",
            Error::MissingTemplate(_) => "MISSING_TEMPLATE",
            Error::Io(_) => "IO_ERROR",
            Error::Format(_) => "FORMAT_ERROR",
        }
    }

    /// Process exit status for the CLI. Zero is never returned.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 2,
            Error::Format(_) | Error::UnsupportedVersion { .. } | Error::InvalidInput(_) => 3,
            Error::WrongSampleSize { .. } => 10,
            Error::DegenerateSample(_) => 11,
            Error::RankDeficientTemplate => 12,
            Error::CollinearFrame(_) => 13,
            Error::DegenerateAlpha(_) => 14,
            Error::NoRealRoot => 15,
            Error::AllZeroCoordinates => 16,
            Error::InfeasibleBasis(_) => 20,
            Error::ShapeMismatch(_) => 21,
            Error::MissingTemplate(_) => 22,
            Error::InsufficientData(_) => 30,
            Error::NoValidModel => 31,
            Error::RetryExhausted(_) => 40,
        }
    }
}
