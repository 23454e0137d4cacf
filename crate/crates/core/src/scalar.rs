//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating-point scalar the walk is generic over.
///
/// Implemented for `f32` and `f64`. The acceptance tolerances on norm drift
/// (1e-10 over thousands of steps) are only reachable with `f64`, which is
/// what the crate-root aliases use.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this scalar.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Converts a count or index into this scalar.
    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + Sum
        + Default
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Neumaier-compensated sum. Grid-wide norms add up to ~10^6 terms of similar
/// size, where plain summation drifts by ~1e-12.
pub fn compensated_sum<T: Real>(values: impl IntoIterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut carry = T::zero();
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            carry = carry + ((sum - t) + x);
        } else {
            carry = carry + ((x - t) + sum);
        }
        sum = t;
    }
    sum + carry
}
