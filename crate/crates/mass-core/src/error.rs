//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the pipeline.
#[derive(Debug, Error)]
pub enum MassError {
    // -- ingestion --
    #[error("malformed EDF header: {0}")]
    MalformedHeader(String),
    #[error("truncated EDF data: {0}")]
    TruncatedData(String),
    #[error("unsupported EDF feature: {0}")]
    UnsupportedFeature(String),
    #[error("sample rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("channel not found: {0}")]
    ChannelNotFound(String),
    #[error("recording has no scored epochs")]
    NoScoredEpochs,
    #[error("malformed container file: {0}")]
    MalformedContainer(String),

    // -- features --
    #[error("epoch must have exactly {expected} samples, got {got}")]
    WrongLength { expected: usize, got: usize },

    // -- masking --
    #[error("degenerate mask: {0}")]
    DegenerateMask(String),
    #[error("mask plan has no visible patches")]
    EmptyVisibleSet,

    // -- nn / training --
    #[error("backward requires a scalar loss, got shape [{0}, {1}]")]
    NonScalarLoss(usize, usize),
    #[error("non-finite loss at step {step}: {value}")]
    NonFiniteLoss { step: usize, value: f64 },
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    // -- config / reporting --
    #[error("invalid argument: {0}")]
    InvalidArg(String),
    #[error("invalid config key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MassError>;
