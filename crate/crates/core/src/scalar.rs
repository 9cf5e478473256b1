//! Scalar abstraction shared by every numeric kernel.
//!
//! Kernels are written once against [`Scalar`] and instantiated for `f32`
//! (the storage type of weight and descriptor files) and `f64` (used by the
//! gradient-check harness, where finite differences need the extra digits).
//! Reductions always accumulate in `f64` regardless of the storage type.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::distributions::uniform::SampleUniform;

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + SampleUniform
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Short type name used in reports.
    const NAME: &'static str;

    /// Rounds an `f64` to this type.
    fn of(v: f64) -> Self;

    /// Widens to `f64` for accumulation.
    fn wide(self) -> f64;
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn wide(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn wide(self) -> f64 {
        self
    }
}
