//! Scalar abstraction for the polynomial layer.
//!
//! Polynomial vector fields are generic over the coefficient scalar so the
//! same algebra serves the real swing expansions (`f64`) and the
//! conjugate-paired modal systems (`Complex<f64>`). `f32` variants come for
//! free through the same trait.

use num_complex::Complex;
use num_traits::{Float, FromPrimitive, One, Zero};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Scalar:
    Copy
    + fmt::Debug
    + fmt::Display
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Zero
    + One
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Underlying real type (magnitudes, thresholds).
    type Real: Float + FromPrimitive + fmt::Debug + fmt::Display + Send + Sync + 'static;

    fn from_real(r: Self::Real) -> Self;
    fn from_f64(v: f64) -> Self;
    fn conjugate(self) -> Self;
    fn mag(self) -> Self::Real;
    fn real_part(self) -> Self::Real;
    fn imag_part(self) -> Self::Real;
    fn is_finite_scalar(self) -> bool;

    fn powu(self, n: usize) -> Self {
        let mut acc = Self::one();
        for _ in 0..n {
            acc *= self;
        }
        acc
    }
}

macro_rules! impl_real_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            type Real = $t;

            fn from_real(r: $t) -> Self {
                r
            }
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn conjugate(self) -> Self {
                self
            }
            fn mag(self) -> $t {
                self.abs()
            }
            fn real_part(self) -> $t {
                self
            }
            fn imag_part(self) -> $t {
                0.0
            }
            fn is_finite_scalar(self) -> bool {
                self.is_finite()
            }
        }
    };
}

macro_rules! impl_complex_scalar {
    ($t:ty) => {
        impl Scalar for Complex<$t> {
            type Real = $t;

            fn from_real(r: $t) -> Self {
                Complex::new(r, 0.0)
            }
            fn from_f64(v: f64) -> Self {
                Complex::new(v as $t, 0.0)
            }
            fn conjugate(self) -> Self {
                self.conj()
            }
            fn mag(self) -> $t {
                self.norm()
            }
            fn real_part(self) -> $t {
                self.re
            }
            fn imag_part(self) -> $t {
                self.im
            }
            fn is_finite_scalar(self) -> bool {
                self.re.is_finite() && self.im.is_finite()
            }
        }
    };
}

impl_real_scalar!(f32);
impl_real_scalar!(f64);
impl_complex_scalar!(f32);
impl_complex_scalar!(f64);

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn complex_conjugate_and_modulus() {
        let z = Complex64::new(3.0, -4.0);
        assert_eq!(z.conjugate(), Complex64::new(3.0, 4.0));
        assert_eq!(z.mag(), 5.0);
        assert_eq!(z.powu(2), z * z);
    }

    #[test]
    fn f32_roundtrip() {
        let x: f32 = 2.5;
        assert_eq!(x.powu(3), 15.625);
        assert_eq!(<f32 as Scalar>::from_f64(0.5), 0.5f32);
    }
}
