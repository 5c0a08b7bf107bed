//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the simulator, estimator and optimizer run on.
///
/// Besides the arithmetic from [`Float`], a scalar carries the two
/// tolerances the hybrid engine needs: the absolute zero test for fluid
/// queue contents and the window inside which two event times count as
/// simultaneous.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Absolute tolerance for "queue is empty" in fluid mode.
    fn zero_tol() -> Self;

    /// Two hitting times closer than this are processed as one instant.
    fn time_tol() -> Self;

    /// Converts an `f64` literal. Panics only for values the type cannot
    /// represent at all, which never happens for `f32`/`f64`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    #[inline]
    fn zero_tol() -> Self {
        1e-9
    }
    #[inline]
    fn time_tol() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    #[inline]
    fn zero_tol() -> Self {
        1e-4
    }
    #[inline]
    fn time_tol() -> Self {
        1e-3
    }
}
