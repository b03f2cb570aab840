//! Scalar abstraction over the floating-point element type.
//!
//! All numeric code in this crate is generic over [`Scalar`] so the same
//! simulator runs in `f32` or `f64`. Experiments default to `f64` (see the
//! type aliases at the crate root); `f32` is useful for memory-bound sweeps.

use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + fmt::Display
    + fmt::Debug
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from `f64` literals and RNG draws.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 -> Scalar conversion")
    }

    /// Conversion to `f64` for reporting and serialization.
    fn into_f64(self) -> f64 {
        self.to_f64().expect("Scalar -> f64 conversion")
    }

    /// Tolerance used when validating that probability rows sum to one.
    fn prob_row_tol() -> Self;
}

impl Scalar for f64 {
    fn prob_row_tol() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    fn prob_row_tol() -> Self {
        1e-5
    }
}
