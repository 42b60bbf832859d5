//! Noisy odometry and compass measurements from ground truth.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::measurement::HeadingMeasurement;
use crate::prediction::{noise_at_distance, OdometryMeasurement, OdometryNoiseModel};
use crate::scalar::wrap_pi;

/// True relative motion since the previous update, in the previous frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueDelta {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
    pub dist: f64,
}

/// Gaussian perturbation of the true delta; the distance is passed through.
pub fn sample_odometry<R: Rng + ?Sized>(delta: &TrueDelta, model: &OdometryNoiseModel, rng: &mut R) -> OdometryMeasurement {
    let (s_xy, s_theta) = noise_at_distance(model, delta.dist);
    let mut n = || -> f64 { StandardNormal.sample(rng) };
    let (nx, ny, nt) = (n(), n(), n());
    OdometryMeasurement {
        u_x: delta.dx + s_xy * nx,
        u_y: delta.dy + s_xy * ny,
        u_theta: wrap_pi(delta.dtheta + s_theta * nt),
        u_o: delta.dist,
    }
}

/// Compass reading `wrap(θ + N(0, σ²))`.
pub fn sample_heading<R: Rng + ?Sized>(true_theta: f64, sigma_v: f64, rng: &mut R) -> HeadingMeasurement {
    let n: f64 = StandardNormal.sample(rng);
    HeadingMeasurement {
        v: crate::scalar::wrap_two_pi(true_theta + sigma_v * n),
        sigma_v,
    }
}
