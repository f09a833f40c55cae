//! Scalar abstraction shared by every module.

use std::fmt;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Real floating-point type the solvers are generic over (`f32` or `f64`).
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + FftNum + fmt::Display + fmt::LowerExp
{
    /// Converts an `f64` literal; every `Real` can represent (a rounding of) any finite `f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Step used by central differences: `1e-6` in double precision, coarser for `f32`.
    fn fd_step() -> Self {
        let floor = Self::default_epsilon().sqrt() * Self::lit(10.0);
        Self::lit(1e-6).max(floor)
    }
}

impl Real for f32 {}
impl Real for f64 {}
