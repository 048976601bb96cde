//! Scalar abstraction for the kinematic core.
//!
//! Everything numeric in [`crate::kinematics`] and [`crate::octree`] is
//! written against this trait so the same formulas run at `f32` or `f64`.
//! The analysis pipeline instantiates them at `f64`; the binary octree
//! format stores coordinates as little-endian `f64` regardless of the
//! in-memory scalar.

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating-point scalar usable by the kinematic and octree cores.
pub trait Real:
    Float + FloatConst + FromPrimitive + core::fmt::Debug + core::fmt::Display + Send + Sync + 'static
{
    /// Converts from `f64`, rounding to the nearest representable value.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to any Real")
    }

    /// Converts to `f64`, rounding to the nearest representable value.
    fn to_f64_lossy(self) -> f64;
}

impl Real for f32 {
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip_exact_values() {
        assert_eq!(<f32 as Real>::of(0.5), 0.5f32);
        assert_eq!(<f64 as Real>::of(0.5), 0.5f64);
        assert_eq!(Real::to_f64_lossy(2.25f32), 2.25f64);
        assert_eq!(Real::to_f64_lossy(2.25f64), 2.25f64);
    }
}
