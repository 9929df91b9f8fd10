//! Floating-point scalar abstraction.
//!
//! All numeric code in this crate is generic over [`Scalar`] so the same
//! implementation runs in 32-bit or 64-bit mode. The 64-bit mode is the
//! reference: gradient checks and the acceptance suite run on `f64`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless-enough conversion from `f64` for constants and config values.
    fn from_f64_c(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant")
    }

    /// Conversion from `usize` index arithmetic.
    fn from_usize_c(v: usize) -> Self {
        Self::from_usize(v).expect("usize fits in scalar")
    }

    /// Widen to `f64` for reporting and serialization.
    fn to_f64_c(self) -> f64 {
        self.to_f64().expect("scalar widens to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
