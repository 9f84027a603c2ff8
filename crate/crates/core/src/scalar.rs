//! Scalar abstraction for the closed-form limit objects.
//!
//! The simulation itself runs in `f64`; the limit laws, survival formulas and
//! goodness-of-fit statistics are written once against [`Real`] so they can be
//! evaluated in `f32` or `f64`. Exact probabilities live in the oracle, which
//! is generic over [`crate::oracle::Weight`] instead.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn of_u64(x: u64) -> Self {
        Self::from_u64(x).expect("u64 is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("real converts to f64")
    }
}

impl<T> Real for T where
    T: Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
}
