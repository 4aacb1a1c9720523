//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};

use nalgebra::{Complex, ComplexField, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point type the library is generic over (`f32` or `f64`).
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display {}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display {}

/// Complex values with components of type `T`.
pub type C<T> = Complex<T>;

/// Converts an `f64` literal into the working precision.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in working precision")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub fn re<T: Real>(x: T) -> C<T> {
    Complex::new(x, T::zero())
}

#[inline]
pub fn modulus<T: Real>(z: C<T>) -> T {
    ComplexField::modulus(z)
}

#[inline]
pub fn modulus_sq<T: Real>(z: C<T>) -> T {
    z.re * z.re + z.im * z.im
}

#[inline]
pub fn is_finite<T: Real>(z: C<T>) -> bool {
    ComplexField::is_finite(&z.re) && ComplexField::is_finite(&z.im)
}

pub(crate) fn complex_to_f64<T: Real>(z: C<T>) -> Complex<f64> {
    Complex::new(to_f64(z.re), to_f64(z.im))
}
