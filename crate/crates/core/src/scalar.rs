//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real floating-point scalar: `f32` or `f64`.
///
/// All factorizations go through nalgebra, so the bound is `RealField` plus
/// the num-traits conversions needed to move constants in and out.
pub trait Real:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + Display
    + Debug
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Lossy conversion to `f64` (used for special functions and output).
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    /// Machine epsilon of the scalar type.
    fn eps() -> Self;
}

impl Real for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
}
