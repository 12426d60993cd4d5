//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All algorithms are written against [`Scalar`] so they run unchanged in
//! `f32` and `f64`. Tolerances quoted for the `f64` instantiation are scaled
//! by [`Scalar::tol`] so the `f32` instantiation degrades gracefully instead
//! of looping forever on unattainable targets.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Infallible for the supported floats.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    /// Clamps a requested relative tolerance from below by a small multiple
    /// of the type's machine epsilon.
    #[inline]
    fn tol(requested: f64) -> Self {
        Self::lit(requested).max(Self::epsilon() * Self::lit(8.0))
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tol_respects_precision() {
        assert_eq!(<f64 as Scalar>::tol(1e-14), 1e-14);
        assert!(<f32 as Scalar>::tol(1e-14) > 1e-7);
    }
}
