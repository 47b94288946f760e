//! Floating point abstraction shared by the closed-form formulas and the walk kernel.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar used by the formula layer: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("scalar conversion from f64")
    }

    /// Lossy conversion to `f64`.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar conversion to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `Z(λ) = e^λ + 1 + e^{−λ}`, the normalization of the tilted kernel.
pub fn normalizer<T: Scalar>(lambda: T) -> T {
    lambda.exp() + T::one() + (-lambda).exp()
}

/// First derivative of [`normalizer`] in λ.
pub fn normalizer_d1<T: Scalar>(lambda: T) -> T {
    lambda.exp() - (-lambda).exp()
}

/// Second derivative of [`normalizer`] in λ.
pub fn normalizer_d2<T: Scalar>(lambda: T) -> T {
    lambda.exp() + (-lambda).exp()
}
