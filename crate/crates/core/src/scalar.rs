//! Scalar abstractions.
//!
//! Floating-point code is written against [`Real`], which `f32` and `f64`
//! implement. The exact cone feasibility solver only needs ordered field
//! arithmetic and is written against [`Field`], which also covers
//! `BigRational`.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, Num, Signed, ToPrimitive};

/// Floating-point scalar used throughout the simulation code.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; every `Real` can represent (an approximation of) any `f64`.
    #[inline]
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Ordered field arithmetic, enough for pivoting linear programming.
pub trait Field: Clone + PartialOrd + Num + Signed + Debug {}

impl<T> Field for T where T: Clone + PartialOrd + Num + Signed + Debug {}
