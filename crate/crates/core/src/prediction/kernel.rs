//! Odometry measurement, noise model and the discretized 1D shift kernels.

use statrs::function::erf::erfc;

/// Relative motion since the previous update, expressed in the vehicle frame
/// at the previous update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryMeasurement {
    /// Forward translation (m).
    pub u_x: f64,
    /// Leftward translation (m).
    pub u_y: f64,
    /// Heading change (rad).
    pub u_theta: f64,
    /// Distance travelled (m), only used to scale the noise.
    pub u_o: f64,
}

impl OdometryMeasurement {
    pub fn new(u_x: f64, u_y: f64, u_theta: f64, u_o: f64) -> Self {
        Self {
            u_x,
            u_y,
            u_theta,
            u_o,
        }
    }
}

/// Standard deviations that grow linearly with distance travelled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryNoiseModel {
    /// Metres of translation std per metre travelled.
    pub sigma_xy_rate: f64,
    /// Radians of heading std per metre travelled.
    pub sigma_theta_rate: f64,
}

impl OdometryNoiseModel {
    pub fn new(sigma_xy_rate: f64, sigma_theta_rate: f64) -> Self {
        Self {
            sigma_xy_rate,
            sigma_theta_rate,
        }
    }

    /// 0.05 m/m and 0.15°/m.
    pub fn vio_default() -> Self {
        Self::new(0.05, 0.15f64.to_radians())
    }
}

/// `(sigma_xy, sigma_theta)` accumulated over `distance` metres.
pub fn noise_at_distance(model: &OdometryNoiseModel, distance: f64) -> (f64, f64) {
    let d = distance.max(0.0);
    (model.sigma_xy_rate * d, model.sigma_theta_rate * d)
}

/// Rotates the body-frame translation into the map frame for a voxel whose
/// heading is `alpha`.
pub fn global_shift(u: &OdometryMeasurement, alpha: f64) -> (f64, f64) {
    let (s, c) = alpha.sin_cos();
    (u.u_x * c - u.u_y * s, u.u_x * s + u.u_y * c)
}

/// Discrete transition along one axis: the mass of a source cell lands in
/// cells `src + offset + h` with weight `taps[h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftKernel {
    pub offset: i64,
    pub taps: Vec<f64>,
}

impl ShiftKernel {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Builds the kernel for a shift of `mean_shift` with std `sigma`, both in the
/// units of `resolution`.
///
/// The integer part of the shift goes into `offset`; the fractional residual
/// becomes the mean of the normal whose cell masses (CDF differences over
/// `[k - 0.5, k + 0.5)`) form the taps. Taps span `±ceil(4 sigma)` cells around
/// the integer shift (plus one cell when the residual is nonzero) and are
/// renormalized to sum to one.
pub fn build_kernel(mean_shift: f64, sigma: f64, resolution: f64) -> ShiftKernel {
    let s = mean_shift / resolution;
    let whole = s.floor();
    let frac = s - whole;
    let whole = whole as i64;
    let sc = sigma.max(0.0) / resolution;

    if sc == 0.0 {
        // all mass on the nearest cell
        let k = if frac >= 0.5 { 1 } else { 0 };
        return ShiftKernel {
            offset: whole + k,
            taps: vec![1.0],
        };
    }

    let half = (4.0 * sc).ceil() as i64;
    let lo = -half;
    let hi = half + i64::from(frac > 0.0);
    let mut taps: Vec<f64> = (lo..=hi)
        .map(|k| {
            let k = k as f64;
            let upper = (k + 0.5 - frac) / sc;
            let lower = (k - 0.5 - frac) / sc;
            // difference of upper tails is more accurate on the right side
            if lower > 0.0 {
                normal_cdf(-lower) - normal_cdf(-upper)
            } else {
                normal_cdf(upper) - normal_cdf(lower)
            }
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    ShiftKernel {
        offset: whole + lo,
        taps,
    }
}
