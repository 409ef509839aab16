//! Scalar abstraction for the numeric core.
//!
//! Every routine that does floating-point work is generic over [`Real`], so
//! the same code runs at `f32` or `f64` precision. The crate root exports
//! `f64` aliases for the domain types; the exact-rational paths in
//! `counterexample` use `num_rational::BigRational` directly and do not go
//! through this trait.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::float::{Float, FloatConst};
use num_traits::NumCast;

pub trait Real:
    Float
    + FloatConst
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Convert an `f64` literal into this scalar type.
    fn of(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("f64 literal must convert into the scalar type")
    }

    fn to_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn two() -> Self {
        Self::one() + Self::one()
    }

    fn half() -> Self {
        Self::one() / Self::two()
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_conversion_roundtrips() {
        assert_eq!(<f64 as Real>::of(0.25), 0.25);
        assert_eq!(<f32 as Real>::of(0.25), 0.25f32);
        assert_eq!(Real::to_f64(1.5f32), 1.5);
    }
}
