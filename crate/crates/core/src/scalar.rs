//! Scalar abstraction shared by the numeric modules.

use nalgebra as na;
use num_traits as nt;
use std::fmt::{Display, LowerExp};
use std::str::FromStr;

/// Floating point types the numeric core is generic over.
pub trait Real:
    Copy
    + nt::FloatConst
    + nt::FromPrimitive
    + nt::ToPrimitive
    + na::RealField
    + na::Scalar
    + Display
    + LowerExp
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`.
    fn lit(x: f64) -> Self {
        na::convert(x)
    }

    /// Lossy conversion to `f64`.
    fn as_f64(self) -> f64 {
        nt::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Machine epsilon.
    fn eps() -> Self {
        Self::default_epsilon()
    }

    fn infinity() -> Self {
        Self::lit(f64::INFINITY)
    }

    fn neg_infinity() -> Self {
        Self::lit(f64::NEG_INFINITY)
    }

    /// Small positive guard value, `eps²`.
    fn tiny() -> Self {
        Self::eps() * Self::eps()
    }
}

impl Real for f32 {}
impl Real for f64 {}
