//! Scalar abstraction shared by descriptors, patches, maps and weight grids.
//!
//! Belief mass is always accumulated in `f64`; everything that stores
//! per-voxel image-derived data (descriptor maps, weight grids, patches) is
//! generic over [`Real`] so large maps can live in memory as `f32`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// floating point: f32 or f64
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; always succeeds for finite inputs.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("float to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Sum of `values` in fixed-size blocks, blocks combined in order.
///
/// Deterministic and keeps the rounding error of multi-million element sums
/// far below the 1e-9 normalization tolerance.
pub fn block_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 4096;
    let mut total = 0.0;
    for chunk in values.chunks(BLOCK) {
        total += chunk.iter().sum::<f64>();
    }
    total
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_two_pi(angle: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    if (0.0..tau).contains(&angle) {
        return angle;
    }
    let r = angle.rem_euclid(tau);
    // rem_euclid can round up to exactly tau for tiny negative inputs
    if r >= tau {
        0.0
    } else {
        r
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_pi(angle: f64) -> f64 {
    let pi = std::f64::consts::PI;
    if (-pi..pi).contains(&angle) {
        return angle;
    }
    wrap_two_pi(angle + pi) - pi
}
