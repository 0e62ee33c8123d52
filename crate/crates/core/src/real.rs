//! Scalar types.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive};

/// Real floating-point type backing the complex element type.
///
/// Implemented for `f32` (the default element precision) and `f64`
/// (used where tight numerical checks are needed).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + rustfft::FftNum
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Machine epsilon.
    const EPS: Self;

    fn from_f64_lossy(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;
}

impl Real for f32 {
    const EPS: Self = f32::EPSILON;

    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const EPS: Self = f64::EPSILON;

    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

/// Complex element type.
pub type Cplx<R> = Complex<R>;

#[cfg(test)]
#[inline]
pub(crate) fn c<R: Real>(re: f64, im: f64) -> Cplx<R> {
    Complex::new(R::from_f64_lossy(re), R::from_f64_lossy(im))
}

#[inline]
pub(crate) fn re<R: Real>(x: R) -> Cplx<R> {
    Complex::new(x, R::zero())
}

#[inline]
pub(crate) fn zero<R: Real>() -> Cplx<R> {
    Complex::new(R::zero(), R::zero())
}

#[inline]
pub(crate) fn one<R: Real>() -> Cplx<R> {
    Complex::new(R::one(), R::zero())
}
