//! Scalar abstraction for bin weights and potentials.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the load-balancing processes are generic over.
///
/// Unit-weight processes accumulate integers, which both `f32` and `f64`
/// represent exactly up to `2^(MANTISSA_DIGITS)`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Largest exponent argument accepted by the potential functions.
    const EXP_LIMIT: Self;

    /// Number of significand bits; integers below `2^MANTISSA_DIGITS` are exact.
    const MANTISSA_DIGITS: u32;

    fn of_usize(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("usize fits any float")
    }

    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 converts to any float")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl Scalar for f64 {
    const EXP_LIMIT: f64 = 700.0;
    const MANTISSA_DIGITS: u32 = f64::MANTISSA_DIGITS;
}

impl Scalar for f32 {
    const EXP_LIMIT: f32 = 88.0;
    const MANTISSA_DIGITS: u32 = f32::MANTISSA_DIGITS;
}
