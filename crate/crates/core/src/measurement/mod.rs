//! Weight grids from the heading (compass) and map-matching measurements.

mod likelihood;
mod von_mises;

pub use likelihood::{
    bayesian_weights, bayesian_weights_with_prior, calibrate, linear_weights, CalibrationModel,
    DEFAULT_CALIBRATION_BINS, DEFAULT_CALIBRATION_FLOOR,
};
pub use von_mises::{von_mises_cdf, VonMisesCdf, CDF_TOLERANCE};

use thiserror::Error;

use crate::belief::GridSpec;
use crate::scalar::{wrap_pi, Real};

#[derive(Debug, Error, PartialEq)]
pub enum MeasurementError {
    #[error("descriptor dimension {got} does not match map dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("weight array has {got} entries, grid has {expected} voxels")]
    LengthMismatch { expected: usize, got: usize },
    #[error("weights must lie in [0, 1]")]
    WeightOutOfRange,
    #[error("heading sigma must be positive and finite, got {0}")]
    BadHeadingSigma(f64),
    #[error("calibration needs at least one {0} distance")]
    EmptySamples(&'static str),
    #[error("distance {0} outside [0, 2]")]
    DistanceOutOfRange(f64),
    #[error("invalid calibration model: {0}")]
    BadCalibration(String),
}

/// Per-voxel multiplicative weights in `[0, 1]`, laid out like the belief.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGrid<T> {
    spec: GridSpec,
    w: Vec<T>,
}

impl<T: Real> WeightGrid<T> {
    pub fn filled(spec: GridSpec, value: T) -> Self {
        Self {
            spec,
            w: vec![value; spec.len()],
        }
    }

    pub fn from_values(spec: GridSpec, w: Vec<T>) -> Result<Self, MeasurementError> {
        if w.len() != spec.len() {
            return Err(MeasurementError::LengthMismatch {
                expected: spec.len(),
                got: w.len(),
            });
        }
        if w.iter().any(|v| !(*v >= T::zero() && *v <= T::one())) {
            return Err(MeasurementError::WeightOutOfRange);
        }
        Ok(Self { spec, w })
    }

    /// Skips the `[0, 1]` range check; length is still asserted.
    pub fn from_values_unchecked(spec: GridSpec, w: Vec<T>) -> Self {
        assert_eq!(w.len(), spec.len());
        Self { spec, w }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[T] {
        &self.w
    }

    pub fn get(&self, i: usize, j: usize, l: usize) -> T {
        self.w[self.spec.index(i, j, l)]
    }
}

/// Compass heading w.r.t. map East with Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadingMeasurement {
    /// Radians in `[0, 2π)`.
    pub v: f64,
    /// Radians, > 0.
    pub sigma_v: f64,
}

impl HeadingMeasurement {
    pub fn new(v: f64, sigma_v: f64) -> Result<Self, MeasurementError> {
        if !(sigma_v.is_finite() && sigma_v > 0.0) {
            return Err(MeasurementError::BadHeadingSigma(sigma_v));
        }
        Ok(Self {
            v: crate::scalar::wrap_two_pi(v),
            sigma_v,
        })
    }

    /// Von Mises concentration approximating the circular Gaussian.
    pub fn kappa(&self) -> f64 {
        1.0 / (self.sigma_v * self.sigma_v)
    }
}

/// Von Mises probability mass of every heading bin.
///
/// The CDF is evaluated once per bin edge and bin masses are differences of
/// consecutive edges, so the masses telescope to exactly one over the circle.
pub fn heading_bin_masses(spec: &GridSpec, meas: &HeadingMeasurement) -> Vec<f64> {
    let n = spec.n_theta;
    if n == 1 {
        return vec![1.0];
    }
    let cdf = VonMisesCdf::new(meas.kappa());
    let rel: Vec<f64> = (0..n).map(|l| wrap_pi(spec.theta_lower(l) - meas.v)).collect();
    let at: Vec<f64> = rel.iter().map(|r| cdf.relative(*r)).collect();
    (0..n)
        .map(|l| {
            let next = (l + 1) % n;
            // the bin straddles the branch point mu ± π
            let wraps = rel[next] < rel[l];
            let m = at[next] - at[l] + if wraps { 1.0 } else { 0.0 };
            m.clamp(0.0, 1.0)
        })
        .collect()
}

/// Heading weight grid: constant over (i, j), von Mises bin mass over l.
pub fn heading_weights<T: Real>(spec: &GridSpec, meas: &HeadingMeasurement) -> WeightGrid<T> {
    let column: Vec<T> = heading_bin_masses(spec, meas).into_iter().map(T::lit).collect();
    let mut w = Vec::with_capacity(spec.len());
    for _ in 0..spec.n_x * spec.n_y {
        w.extend_from_slice(&column);
    }
    WeightGrid { spec: *spec, w }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{make_grid_spec, Extent};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn spec(nt: usize) -> GridSpec {
        make_grid_spec(Extent::square(20.0), 10.0, nt).unwrap()
    }

    /// Midpoint rule over one bin with the density normalized on the full
    /// circle by the same rule.
    fn bin_mass_oracle(lo: f64, hi: f64, mu: f64, kappa: f64) -> f64 {
        let f = |t: f64| (kappa * (t - mu).cos()).exp();
        let n = 400_000;
        let sum = |a: f64, b: f64| {
            let h = (b - a) / n as f64;
            (0..n).map(|k| f(a + (k as f64 + 0.5) * h)).sum::<f64>() * h
        };
        sum(lo, hi) / sum(0.0, 2.0 * PI)
    }

    #[test]
    fn flat_heading_gives_equal_bins() {
        let m = HeadingMeasurement::new(1.0, 1e4).unwrap();
        let w = heading_bin_masses(&spec(60), &m);
        for v in w {
            assert!((v - 1.0 / 60.0).abs() < 1e-6);
        }
    }

    #[test]
    fn concentrated_heading_fills_one_bin() {
        let s = spec(60);
        let m = HeadingMeasurement::new(s.theta_center(17), 0.1f64.to_radians()).unwrap();
        let w = heading_bin_masses(&s, &m);
        assert!(w[17] > 0.999);
    }

    #[test]
    fn three_degree_bin_mass() {
        // v = 3°, sigma 3°: bin [0°, 6°) holds about one sigma either side
        let s = spec(60);
        let m = HeadingMeasurement::new(3f64.to_radians(), 3f64.to_radians()).unwrap();
        let w = heading_bin_masses(&s, &m);
        let oracle = bin_mass_oracle(0.0, s.r_theta, m.v, m.kappa());
        assert!((w[0] - oracle).abs() < 1e-8, "{} vs {}", w[0], oracle);
        assert!((w[0] - 0.683).abs() < 2e-3);
    }

    #[test]
    fn wrap_bin_gets_full_mass() {
        // mean at 359°: mass splits between last and first bins
        let s = spec(60);
        let m = HeadingMeasurement::new(359f64.to_radians(), 3f64.to_radians()).unwrap();
        let w = heading_bin_masses(&s, &m);
        let first = bin_mass_oracle(0.0, s.r_theta, m.v, m.kappa());
        let last = bin_mass_oracle(2.0 * PI - s.r_theta, 2.0 * PI, m.v, m.kappa());
        assert!((w[0] - first).abs() < 1e-8);
        assert!((w[59] - last).abs() < 1e-8);
    }

    #[test]
    fn grid_is_constant_over_plane() {
        let s = make_grid_spec(Extent::square(30.0), 10.0, 12).unwrap();
        let m = HeadingMeasurement::new(2.0, 0.3).unwrap();
        let g: WeightGrid<f32> = heading_weights(&s, &m);
        for i in 0..3 {
            for j in 0..3 {
                for l in 0..12 {
                    assert_eq!(g.get(i, j, l), g.get(0, 0, l));
                }
            }
        }
    }

    #[test]
    fn bad_sigma_rejected() {
        assert!(HeadingMeasurement::new(0.0, 0.0).is_err());
        assert!(HeadingMeasurement::new(0.0, f64::NAN).is_err());
    }

    #[test]
    fn weight_grid_validation() {
        let s = spec(2);
        assert!(WeightGrid::from_values(s, vec![0.5f64; s.len()]).is_ok());
        assert_eq!(
            WeightGrid::from_values(s, vec![1.5f64; s.len()]).unwrap_err(),
            MeasurementError::WeightOutOfRange
        );
        assert!(matches!(
            WeightGrid::from_values(s, vec![0.5f64; 3]),
            Err(MeasurementError::LengthMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn bins_sum_to_one(v in 0.0f64..(2.0 * PI), sigma_deg in 0.2f64..120.0, nt in 1usize..90) {
            let m = HeadingMeasurement::new(v, sigma_deg.to_radians()).unwrap();
            let w = heading_bin_masses(&spec(nt), &m);
            let total: f64 = w.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn rotation_by_whole_bins(v in 0.0f64..(2.0 * PI), shift in 0usize..24) {
            let s = spec(24);
            let m = HeadingMeasurement::new(v, 0.2).unwrap();
            let r = HeadingMeasurement::new(v + shift as f64 * s.r_theta, 0.2).unwrap();
            let a = heading_bin_masses(&s, &m);
            let b = heading_bin_masses(&s, &r);
            for l in 0..24 {
                prop_assert!((a[l] - b[(l + shift) % 24]).abs() < 1e-9);
            }
        }
    }
}
