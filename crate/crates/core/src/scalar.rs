//! Floating-point scalar abstraction shared by every numeric routine.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point: f32 or f64.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Parses a decimal literal, accepting only finite results.
    fn parse_finite(text: &str) -> Option<Self>;

    /// Converts an `f64` literal. Precision loss is accepted for `f32`.
    fn lit(x: f64) -> Self;

    fn from_count(n: u64) -> Self;

    fn to_f64_lossy(self) -> f64;
}

macro_rules! impl_scalar {
    ($f:ty) => {
        impl Scalar for $f {
            #[inline]
            fn parse_finite(text: &str) -> Option<Self> {
                text.parse::<$f>().ok().filter(|v| v.is_finite())
            }

            #[inline]
            fn lit(x: f64) -> Self {
                x as $f
            }

            #[inline]
            fn from_count(n: u64) -> Self {
                n as $f
            }

            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);
