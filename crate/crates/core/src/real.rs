use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type for all estimators. Implemented by `f32` and `f64`; everything
/// downstream is generic over it, with `f64` as the default type parameter.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from f64, for literals and tolerances.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal not representable in scalar type")
    }

    /// Lossy view as f64, for p-value bridging and report serialization.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("count not representable in scalar type")
    }

    /// Solver tolerances are specified at f64 scale; floor them at a small
    /// multiple of epsilon so f32 instantiations still terminate.
    fn tol(default: f64) -> Self {
        let t = Self::of(default);
        let floor = Self::epsilon() * Self::of(100.0);
        if t < floor {
            floor
        } else {
            t
        }
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + AddAssign
        + SubAssign
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
    fn conversions_roundtrip() {
        assert_eq!(f64::of(1.5), 1.5);
        assert_eq!(f32::of(1.5), 1.5f32);
        assert_eq!(f64::of_usize(7), 7.0);
        assert_eq!((2.25f64).as_f64(), 2.25);
    }

    #[test]
    fn tolerance_floors_at_epsilon_scale() {
        assert_eq!(f64::tol(1e-9), 1e-9);
        assert!(f32::tol(1e-9) >= f32::EPSILON * 100.0);
    }
}
