//! Scalar abstraction shared by the numeric kernel, encoder, objectives and
//! optimizer. Gradient checks and tests run in `f64`; `f32` is accepted for
//! training throughput.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// Floating point element type: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumCast
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Short tag written into checkpoints.
    const TAG: &'static str;

    fn of(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn of_usize(v: usize) -> Self {
        Self::of(v as f64)
    }
}

impl Scalar for f32 {
    const TAG: &'static str = "f32";
}

impl Scalar for f64 {
    const TAG: &'static str = "f64";
}
