use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the numerical core is generic over.
///
/// Implemented for `f32` and `f64`. Everything user-facing in this crate
/// is instantiated at `f64` through the aliases in the crate root; `f32`
/// exists for experiments where memory matters more than the gradient
/// checks.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Tolerance on `|sum - 1|` for a row to count as a simplex vector.
    const SIMPLEX_TOL: f64;
    /// Tolerance on `|norm - 1|` for a row to count as L2-normalized.
    const UNIT_NORM_TOL: f64;

    /// Converts an `f64` literal. Every finite `f64` maps to a value.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f64 {
    const SIMPLEX_TOL: f64 = 1e-9;
    const UNIT_NORM_TOL: f64 = 1e-9;
}

impl Real for f32 {
    const SIMPLEX_TOL: f64 = 1e-5;
    const UNIT_NORM_TOL: f64 = 1e-5;
}
