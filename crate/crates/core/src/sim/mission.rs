//! End-to-end filter runs against a synthetic world.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::camera::{CameraRig, CameraSimConfig};
use super::sensors::{sample_heading, sample_odometry, TrueDelta};
use super::trajectory::{random_waypoints, Pose, Walker};
use super::SimError;
use crate::belief::{apply_weights, converged, estimate_pose, init_uniform, Extent, GridError};
use crate::descriptor::{block_mean_descriptor, Patch};
use crate::map_store::{crop_rotated_patch, DescriptorMap};
use crate::measurement::{
    bayesian_weights_with_prior, heading_weights, linear_weights, CalibrationModel, HeadingMeasurement,
};
use crate::prediction::{predict, OdometryMeasurement, OdometryNoiseModel};
use crate::scalar::{wrap_pi, Real};

use super::world::WorldPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LikelihoodMode {
    Linear,
    Bayesian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionConfig {
    pub seed: u64,
    /// Track to fly; a random track is drawn from `seed` when `None`.
    pub waypoints: Option<Vec<[f64; 2]>>,
    /// Travel between filter updates, meters.
    pub u_l: f64,
    pub max_updates: usize,
    /// Odometry noise assumed by the filter.
    pub noise: OdometryNoiseModel,
    /// Compass noise assumed by the filter, radians.
    pub sigma_v: f64,
    /// Multiplier on the simulated sensor noise; 0 gives exact readings
    /// while the filter keeps its nominal noise model.
    pub sensor_noise_scale: f64,
    pub likelihood: LikelihoodMode,
    pub match_prior: f64,
    pub d: usize,
    /// Patch side, meters.
    pub w: f64,
    /// Patch resolution, meters per pixel.
    pub out_res: f64,
    pub convergence_threshold: f64,
    /// Observe through a simulated tilted camera instead of direct crops.
    pub camera: Option<CameraSimConfig>,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            waypoints: None,
            u_l: 50.0,
            max_updates: 60,
            noise: OdometryNoiseModel::vio_default(),
            sigma_v: 3f64.to_radians(),
            sensor_noise_scale: 1.0,
            likelihood: LikelihoodMode::Bayesian,
            match_prior: 0.5,
            d: 8,
            w: 100.0,
            out_res: 5.0,
            convergence_threshold: 100.0,
            camera: None,
        }
    }
}

/// One filter update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateRecord {
    pub k: usize,
    pub truth: Pose,
    pub estimate: Pose,
    pub err_xy: f64,
    pub err_theta: f64,
    pub sigma_xy: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSummary {
    /// First update at which the filter reported convergence.
    pub k_c: Option<usize>,
    /// Mean translation error over updates `k >= k_c`.
    pub mean_err_post: Option<f64>,
    pub updates: usize,
    pub divergences: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MissionLog {
    pub records: Vec<UpdateRecord>,
    /// Updates at which weighting removed all mass and the belief was reset.
    pub divergences: Vec<usize>,
}

pub const CSV_HEADER: &str = "k,x_true,y_true,theta_true,x_est,y_est,theta_est,err_xy,err_theta,sigma_xy,converged";

impl MissionLog {
    pub fn summary(&self) -> MissionSummary {
        let k_c = self.records.iter().find(|r| r.converged).map(|r| r.k);
        let mean_err_post = k_c.map(|kc| {
            let post: Vec<f64> = self.records.iter().filter(|r| r.k >= kc).map(|r| r.err_xy).collect();
            post.iter().sum::<f64>() / post.len() as f64
        });
        MissionSummary {
            k_c,
            mean_err_post,
            updates: self.records.len(),
            divergences: self.divergences.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:.3},{:.3},{:.6},{:.3},{:.3},{:.6},{:.3},{:.6},{:.3},{}",
                r.k,
                r.truth.x,
                r.truth.y,
                r.truth.theta,
                r.estimate.x,
                r.estimate.y,
                r.estimate.theta,
                r.err_xy,
                r.err_theta,
                r.sigma_xy,
                u8::from(r.converged)
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

/// Relative motion between two poses, in the frame of `from`.
fn true_delta(from: &Pose, to: &Pose, dist: f64) -> TrueDelta {
    let (s, c) = from.theta.sin_cos();
    let (gx, gy) = (to.x - from.x, to.y - from.y);
    TrueDelta {
        dx: c * gx + s * gy,
        dy: -s * gx + c * gy,
        dtheta: wrap_pi(to.theta - from.theta),
        dist,
    }
}

/// Shifts vehicle odometry to the point `offset` (vehicle frame) that the
/// camera observes: `u + R(u_θ)·d − d`.
fn offset_odometry(u: &OdometryMeasurement, offset: [f64; 2]) -> OdometryMeasurement {
    let (s, c) = u.u_theta.sin_cos();
    OdometryMeasurement {
        u_x: u.u_x + c * offset[0] - s * offset[1] - offset[0],
        u_y: u.u_y + s * offset[0] + c * offset[1] - offset[1],
        u_theta: u.u_theta,
        u_o: u.u_o,
    }
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Keeps the track far enough from the grid border for the observed patch
/// (and the camera's look-ahead) to stay inside the map.
fn track_area(spec: &crate::belief::GridSpec, cfg: &MissionConfig, look_ahead: f64) -> Result<Extent, SimError> {
    let inset = cfg.w + look_ahead + 2.0 * spec.r_xy;
    let area = Extent::new(
        spec.x_min + inset,
        spec.x_max - inset,
        spec.y_min + inset,
        spec.y_max - inset,
    );
    if area.x_min >= area.x_max || area.y_min >= area.y_max {
        return Err(SimError::Config(format!("grid too small for a {inset} m track inset")));
    }
    Ok(area)
}

/// Runs the filter along the configured track.
pub fn run_mission<T: Real>(
    world: &WorldPair,
    map: &DescriptorMap<T>,
    calib: Option<&CalibrationModel>,
    cfg: &MissionConfig,
) -> Result<MissionLog, SimError> {
    if !(cfg.sensor_noise_scale >= 0.0) {
        return Err(SimError::Config("sensor noise scale must be nonnegative".into()));
    }
    if !(cfg.u_l > 0.0) {
        return Err(SimError::Config(format!("u_l must be positive, got {}", cfg.u_l)));
    }
    if map.dim() != cfg.d {
        return Err(SimError::Config(format!("map has D={} but config asks for D={}", map.dim(), cfg.d)));
    }
    if cfg.likelihood == LikelihoodMode::Bayesian && calib.is_none() {
        return Err(SimError::Config("bayesian likelihood needs a calibration model".into()));
    }
    let spec = *map.spec();
    let rig = cfg.camera.map(|c| CameraRig::new(c, cfg.w)).transpose()?;
    let offset = rig.as_ref().map_or([0.0, 0.0], |r| r.offset);
    let look_ahead = offset[0].hypot(offset[1]);

    let mut traj_rng = rng_stream(cfg.seed, 1);
    let mut odo_rng = rng_stream(cfg.seed, 2);
    let mut heading_rng = rng_stream(cfg.seed, 3);
    let mut cam_rng = rng_stream(cfg.seed, 4);

    let waypoints = match &cfg.waypoints {
        Some(w) => w.clone(),
        None => {
            let area = track_area(&spec, cfg, look_ahead)?;
            random_waypoints(&mut traj_rng, area, cfg.u_l * (cfg.max_updates as f64 + 1.0))
        }
    };
    let mut walker = Walker::new(waypoints).ok_or_else(|| SimError::Config("track needs two distinct waypoints".into()))?;

    let sensor_model = OdometryNoiseModel {
        sigma_xy_rate: cfg.noise.sigma_xy_rate * cfg.sensor_noise_scale,
        sigma_theta_rate: cfg.noise.sigma_theta_rate * cfg.sensor_noise_scale,
    };
    let mut belief = init_uniform(spec);
    let mut log = MissionLog::default();
    let mut prev = walker.pose();
    for k in 1..=cfg.max_updates {
        let Some(pose) = walker.advance(cfg.u_l) else { break };
        let delta = true_delta(&prev, &pose, cfg.u_l);
        let u = sample_odometry(&delta, &sensor_model, &mut odo_rng);
        let u = offset_odometry(&u, offset);
        belief = predict(&belief, &u, &cfg.noise)?;

        let reading = sample_heading(pose.theta, cfg.sigma_v * cfg.sensor_noise_scale, &mut heading_rng);
        let heading = HeadingMeasurement::new(reading.v, cfg.sigma_v)?;
        let w_h = heading_weights::<T>(&spec, &heading);

        let patch: Patch<T> = match &rig {
            Some(rig) => rig.observe(&world.flight_raster, &pose, cfg.w, cfg.out_res, &mut cam_rng)?,
            None => crop_rotated_patch(&world.flight_raster, pose.x, pose.y, pose.theta, cfg.w, cfg.out_res)?,
        };
        let obs = block_mean_descriptor(&patch, cfg.d)?;
        let w_m = match (cfg.likelihood, calib) {
            (LikelihoodMode::Bayesian, Some(c)) => bayesian_weights_with_prior(&obs, map, c, cfg.match_prior)?,
            _ => linear_weights(&obs, map)?,
        };

        belief = match apply_weights(belief, &[&w_h, &w_m]) {
            Ok(b) => b,
            Err(GridError::ZeroMass) => {
                log.divergences.push(k);
                init_uniform(spec)
            }
            Err(e) => return Err(e.into()),
        };

        let est = estimate_pose(&belief)?;
        let (s, c) = est.theta.sin_cos();
        let estimate = Pose {
            x: est.x - (c * offset[0] - s * offset[1]),
            y: est.y - (s * offset[0] + c * offset[1]),
            theta: est.theta,
        };
        log.records.push(UpdateRecord {
            k,
            truth: pose,
            estimate,
            err_xy: (estimate.x - pose.x).hypot(estimate.y - pose.y),
            err_theta: wrap_pi(estimate.theta - pose.theta).abs(),
            sigma_xy: est.sigma_xy,
            converged: converged(&est, cfg.convergence_threshold),
        });
        prev = pose;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_in_previous_frame() {
        let from = Pose {
            x: 10.0,
            y: 0.0,
            theta: std::f64::consts::FRAC_PI_2,
        };
        let to = Pose {
            x: 10.0,
            y: 50.0,
            theta: std::f64::consts::FRAC_PI_2,
        };
        let d = true_delta(&from, &to, 50.0);
        assert!((d.dx - 50.0).abs() < 1e-12 && d.dy.abs() < 1e-12 && d.dtheta == 0.0);
    }

    #[test]
    fn offset_odometry_straight_is_unchanged() {
        let u = OdometryMeasurement::new(50.0, 0.0, 0.0, 50.0);
        let v = offset_odometry(&u, [120.0, 3.0]);
        assert!((v.u_x - 50.0).abs() < 1e-12 && v.u_y.abs() < 1e-12);
        // a quarter turn swings the look-ahead point sideways
        let u = OdometryMeasurement::new(0.0, 0.0, std::f64::consts::FRAC_PI_2, 1.0);
        let v = offset_odometry(&u, [100.0, 0.0]);
        assert!((v.u_x + 100.0).abs() < 1e-9 && (v.u_y - 100.0).abs() < 1e-9);
    }

    #[test]
    fn summary_from_records() {
        let pose = Pose { x: 0.0, y: 0.0, theta: 0.0 };
        let rec = |k, err, conv| UpdateRecord {
            k,
            truth: pose,
            estimate: pose,
            err_xy: err,
            err_theta: 0.0,
            sigma_xy: 0.0,
            converged: conv,
        };
        let log = MissionLog {
            records: vec![rec(1, 500.0, false), rec(2, 20.0, true), rec(3, 10.0, false)],
            divergences: vec![],
        };
        let s = log.summary();
        assert_eq!(s.k_c, Some(2));
        assert_eq!(s.mean_err_post, Some(15.0));
        assert_eq!(MissionLog::default().summary().k_c, None);
        let csv = log.to_csv_string();
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().count(), 4);
    }
}
