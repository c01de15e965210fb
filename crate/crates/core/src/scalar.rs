//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Display, LowerExp};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Real floating-point scalar the solvers are generic over (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + FftNum + FromPrimitive + ToPrimitive + Default + Display + LowerExp + Sum
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FftNum
        + FromPrimitive
        + ToPrimitive
        + Default
        + Display
        + LowerExp
        + Sum
{
}

/// `x / |x|`, with the convention that the phase of zero is `1`.
#[inline]
pub fn unit_phase<R: Real>(x: Complex<R>) -> Complex<R> {
    let m = x.norm();
    if m > R::zero() {
        x / m
    } else {
        Complex::new(R::one(), R::zero())
    }
}
