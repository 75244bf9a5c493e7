//! Scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar usable by every numeric routine in the crate.
///
/// Implemented for `f32` and `f64`. Accuracy targets quoted in the docs
/// (unitarity, KKT residuals) assume `f64`.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex sample over a [`Real`] scalar.
pub type Cplx<T> = Complex<T>;

/// `e^{-j 2π r / m}` with the phase index reduced modulo `m` before the
/// trigonometric evaluation.
#[inline]
pub(crate) fn twiddle<T: Real>(r: usize, m: usize) -> Cplx<T> {
    let r = r % m;
    let angle = -T::two_pi() * T::from_usize_lossy(r) / T::from_usize_lossy(m);
    Complex::new(angle.cos(), angle.sin())
}

pub(crate) fn norm_sqr<T: Real>(v: &[Cplx<T>]) -> T {
    v.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

/// Converts decibels to a linear power ratio.
pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a linear power ratio to decibels.
pub fn lin_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// A preamble sample, real or complex.
pub trait Sample<T: Real>: Copy {
    fn power(&self) -> T;
    fn to_complex(&self) -> Cplx<T>;
}

impl<T: Real> Sample<T> for T {
    #[inline]
    fn power(&self) -> T {
        *self * *self
    }
    #[inline]
    fn to_complex(&self) -> Cplx<T> {
        Complex::new(*self, T::zero())
    }
}

impl<T: Real> Sample<T> for Cplx<T> {
    #[inline]
    fn power(&self) -> T {
        self.norm_sqr()
    }
    #[inline]
    fn to_complex(&self) -> Cplx<T> {
        *self
    }
}
