//! Scalar abstraction shared by every numeric model component.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the model is evaluated in.
///
/// Implemented for `f32` and `f64`. Random draws are produced in `f64` and
/// narrowed through [`Scalar::lit`].
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `ln(1 + exp(x))` without overflow for large `x`.
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::lit(30.0) {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function `1 / (1 + exp(-x))`.
#[inline]
pub fn logistic<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}
