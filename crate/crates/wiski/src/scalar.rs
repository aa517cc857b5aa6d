//! Scalar abstraction so the numeric core works at either precision.

use nalgebra::RealField;
use num_traits::ToPrimitive;
use rustfft::FftNum;

/// Floating-point scalar the engine is generic over; implemented for `f32` and `f64`.
///
/// Combines the dense linear-algebra requirements (`RealField`) with the FFT
/// requirements (`FftNum`).
pub trait Scalar: RealField + FftNum + ToPrimitive + Default {
    /// Machine epsilon of the concrete type.
    fn eps() -> Self;
}

impl Scalar for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Scalar for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
}

/// Lift an `f64` constant into the working scalar type.
#[inline]
pub fn from_f64<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("constant not representable in scalar type")
}

/// Lift a count into the working scalar type.
#[inline]
pub fn from_usize<T: Scalar>(v: usize) -> T {
    T::from_usize(v).expect("count not representable in scalar type")
}

/// Round-trip to `f64` (exact for `f32`/`f64` inputs within range).
#[inline]
pub fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().expect("scalar not representable as f64")
}

/// Absolute value, disambiguated between the `Signed` and `ComplexField` supertraits.
#[inline]
pub fn abs<T: Scalar>(x: T) -> T {
    num_traits::Signed::abs(&x)
}
