//! Scalar abstraction shared by every solver in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real floating point type the solvers are generic over.
///
/// Implemented for `f32` and `f64`. The production paths (and every tolerance
/// in the test suite) assume `f64`; `f32` is useful for quick exploratory runs
/// on coarse grids.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + LowerExp
    + Sum
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot hold.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("integer not representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex counterpart of a [`Real`].
pub type Cplx<T> = Complex<T>;

pub(crate) fn norm2<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

pub(crate) fn max_abs<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}
