//! Mask-aware sleep staging pipeline.
//!
//! End to end: EDF/CSV ingestion and 30-s epoch segmentation, PSD
//! featurization (30 patches x 128 bins per epoch), multi-level masking
//! with its acquisition power algebra, a prompt-transformer + Bi-GRU
//! classifier built on a small reverse-mode autodiff engine, the
//! three-term training objective with the Lion optimizer, and
//! confusion-matrix evaluation with mask-ratio sweeps.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); `f64` is
//! the reference mode used by the CLI and the acceptance suite.

pub mod error;
pub mod eval;
pub mod ingest;
pub mod masking;
pub mod model;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod spectral;
pub mod train;

pub use error::{MassError, Result};
pub use scalar::Scalar;

/// Reference scalar type (64-bit mode).
pub type Real = f64;

/// Feature block in the reference numeric mode.
pub type SpectralEpochsR = spectral::SpectralEpochs<Real>;

/// Computation graph in the reference numeric mode.
pub type GraphR = nn::Graph<Real>;

/// Model parameters in the reference numeric mode.
pub type MassParamsR = model::MassParams<Real>;
