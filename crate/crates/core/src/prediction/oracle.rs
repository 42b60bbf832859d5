//! Direct-summation reference for [`super::predict`].
//!
//! Enumerates every source voxel and spreads its mass over destination voxels
//! with the full 3D transition probability. It shares no code with the
//! separable path: window bounds, rotation and cell masses are recomputed here
//! from their definitions.

use statrs::distribution::{ContinuousCDF, Normal};

use super::{OdometryMeasurement, OdometryNoiseModel, PredictionError};
use crate::belief::BeliefGrid;

/// 24 x 24 x 12 is the largest grid the tests use; leave some headroom.
pub const DEFAULT_ORACLE_VOXEL_LIMIT: usize = 50_000;

/// Cell probabilities for a 1D displacement, as `(cell offset, probability)`.
fn axis_transition(shift: f64, sigma: f64, res: f64) -> Vec<(i64, f64)> {
    let cells = shift / res;
    let base = cells.floor();
    let residual = cells - base;
    let base = base as i64;
    let sd = sigma / res;
    if sd <= 0.0 {
        return vec![(base + if residual >= 0.5 { 1 } else { 0 }, 1.0)];
    }
    let normal = Normal::new(residual, sd).expect("positive std");
    let reach = (4.0 * sd).ceil() as i64;
    let last = if residual > 0.0 { reach + 1 } else { reach };
    let mut probs: Vec<(i64, f64)> = (-reach..=last)
        .map(|k| {
            let c = k as f64;
            (base + k, normal.cdf(c + 0.5) - normal.cdf(c - 0.5))
        })
        .collect();
    let z: f64 = probs.iter().map(|p| p.1).sum();
    for p in probs.iter_mut() {
        p.1 /= z;
    }
    probs
}

/// Brute-force prediction; refuses grids larger than `voxel_limit`.
pub fn predict_dense_oracle(
    belief: &BeliefGrid,
    u: &OdometryMeasurement,
    model: &OdometryNoiseModel,
    voxel_limit: usize,
) -> Result<BeliefGrid, PredictionError> {
    let spec = *belief.spec();
    if spec.len() > voxel_limit {
        return Err(PredictionError::TooLargeForOracle {
            voxels: spec.len(),
            limit: voxel_limit,
        });
    }
    let sigma_xy = model.sigma_xy_rate * u.u_o;
    let sigma_th = model.sigma_theta_rate * u.u_o;
    let heading = axis_transition(u.u_theta, sigma_th, spec.r_theta);
    let (nx, ny, nt) = (spec.n_x as i64, spec.n_y as i64, spec.n_theta as i64);
    let mut out = vec![0.0; spec.len()];

    for i in 0..spec.n_x {
        for j in 0..spec.n_y {
            for l in 0..spec.n_theta {
                let m = belief.get(i, j, l);
                if m == 0.0 {
                    continue;
                }
                let a = (l as f64 + 0.5) * spec.r_theta;
                let dx = u.u_x * a.cos() - u.u_y * a.sin();
                let dy = u.u_x * a.sin() + u.u_y * a.cos();
                let px = axis_transition(dx, sigma_xy, spec.r_xy);
                let py = axis_transition(dy, sigma_xy, spec.r_xy);
                for &(ox, wx) in &px {
                    let di = i as i64 + ox;
                    if di < 0 || di >= nx {
                        continue;
                    }
                    for &(oy, wy) in &py {
                        let dj = j as i64 + oy;
                        if dj < 0 || dj >= ny {
                            continue;
                        }
                        for &(ot, wt) in &heading {
                            let dl = (l as i64 + ot).rem_euclid(nt);
                            out[spec.index(di as usize, dj as usize, dl as usize)] += m * wx * wy * wt;
                        }
                    }
                }
            }
        }
    }
    BeliefGrid::from_mass(spec, out).map_err(|_| PredictionError::BadMeasurement)
}

#[cfg(test)]
mod tests {
    use super::super::{build_kernel, predict};
    use super::*;
    use crate::belief::{make_grid_spec, Extent, GridSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(n: usize, nt: usize) -> GridSpec {
        make_grid_spec(Extent::square(n as f64 * 10.0), 10.0, nt).unwrap()
    }

    fn random_belief(s: GridSpec, rng: &mut ChaCha8Rng) -> BeliefGrid {
        let mut m: Vec<f64> = (0..s.len()).map(|_| rng.gen::<f64>()).collect();
        let t: f64 = m.iter().sum();
        m.iter_mut().for_each(|v| *v /= t);
        BeliefGrid::from_mass(s, m).unwrap()
    }

    #[test]
    fn identity_case() {
        let s = spec(6, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = random_belief(s, &mut rng);
        let u = OdometryMeasurement::new(0.0, 0.0, 0.0, 0.0);
        let out = predict_dense_oracle(&b, &u, &OdometryNoiseModel::vio_default(), 1000).unwrap();
        assert_eq!(out.mass(), b.mass());
    }

    #[test]
    fn single_voxel_is_outer_product_of_kernels() {
        let s = spec(24, 12);
        let (i, j, l) = (11, 12, 5);
        let b = BeliefGrid::point_mass(s, i, j, l);
        let u = OdometryMeasurement::new(35.0, -12.0, 0.5, 50.0);
        let model = OdometryNoiseModel::new(0.1, 0.01);
        let out = predict_dense_oracle(&b, &u, &model, DEFAULT_ORACLE_VOXEL_LIMIT).unwrap();

        let a = s.theta_center(l);
        let (dx, dy) = (35.0 * a.cos() + 12.0 * a.sin(), 35.0 * a.sin() - 12.0 * a.cos());
        let kx = build_kernel(dx, 5.0, 10.0);
        let ky = build_kernel(dy, 5.0, 10.0);
        let kt = build_kernel(0.5, 0.5, s.r_theta);
        let mut expected = vec![0.0; s.len()];
        for (hx, wx) in kx.taps.iter().enumerate() {
            for (hy, wy) in ky.taps.iter().enumerate() {
                for (ht, wt) in kt.taps.iter().enumerate() {
                    let di = (i as i64 + kx.offset + hx as i64) as usize;
                    let dj = (j as i64 + ky.offset + hy as i64) as usize;
                    let dl = (l as i64 + kt.offset + ht as i64).rem_euclid(12) as usize;
                    expected[s.index(di, dj, dl)] += wx * wy * wt;
                }
            }
        }
        for (e, o) in expected.iter().zip(out.mass()) {
            assert!((e - o).abs() < 1e-12);
        }
    }

    #[test]
    fn refuses_large_grids() {
        let s = spec(100, 12);
        let b = BeliefGrid::point_mass(s, 0, 0, 0);
        let u = OdometryMeasurement::new(0.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            predict_dense_oracle(&b, &u, &OdometryNoiseModel::vio_default(), DEFAULT_ORACLE_VOXEL_LIMIT),
            Err(PredictionError::TooLargeForOracle { .. })
        ));
    }

    #[test]
    fn separable_matches_dense_on_random_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let s = spec(20, 8);
        let b = random_belief(s, &mut rng);
        let u = OdometryMeasurement::new(35.0, -12.0, 30f64.to_radians(), 50.0);
        let model = OdometryNoiseModel::vio_default();
        let fast = predict(&b, &u, &model).unwrap();
        let slow = predict_dense_oracle(&b, &u, &model, DEFAULT_ORACLE_VOXEL_LIMIT).unwrap();
        let worst = fast
            .mass()
            .iter()
            .zip(slow.mass())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-6, "max abs diff {worst}");

        let s = spec(24, 12);
        for _ in 0..5 {
            let b = random_belief(s, &mut rng);
            let u = OdometryMeasurement::new(
                rng.gen_range(-60.0..60.0),
                rng.gen_range(-60.0..60.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.0..120.0),
            );
            let model = OdometryNoiseModel::new(rng.gen_range(0.01..0.1), rng.gen_range(0.0005..0.003));
            let fast = predict(&b, &u, &model).unwrap();
            let slow = predict_dense_oracle(&b, &u, &model, DEFAULT_ORACLE_VOXEL_LIMIT).unwrap();
            for (a, c) in fast.mass().iter().zip(slow.mass()) {
                assert!((a - c).abs() <= 1e-6);
            }
        }
    }
}
