//! TOML run configuration for `lsvl run` and `lsvl sweep`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use lsvl_core::prediction::OdometryNoiseModel;
use lsvl_core::sim::{CameraSimConfig, LikelihoodMode, MissionConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Files inside a `lsvl worldgen` output directory.
pub const WORLD_MAP_RASTER: &str = "map.png";
pub const WORLD_FLIGHT_RASTER: &str = "flight.png";
pub const WORLD_MANIFEST: &str = "world.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Likelihood {
    Linear,
    Bayesian,
}

impl From<Likelihood> for LikelihoodMode {
    fn from(l: Likelihood) -> Self {
        match l {
            Likelihood::Linear => LikelihoodMode::Linear,
            Likelihood::Bayesian => LikelihoodMode::Bayesian,
        }
    }
}

/// Tilted-camera observation settings; angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSection {
    pub altitude: f64,
    pub pitch_deg: f64,
    pub focal_px: f64,
    pub width: u32,
    pub height: u32,
    pub landmarks: usize,
    pub landmark_noise: f64,
}

impl Default for CameraSection {
    fn default() -> Self {
        let c = CameraSimConfig::default();
        Self {
            altitude: c.altitude,
            pitch_deg: 50.0,
            focal_px: c.focal_px,
            width: c.width,
            height: c.height,
            landmarks: c.landmarks,
            landmark_noise: c.landmark_noise,
        }
    }
}

impl From<CameraSection> for CameraSimConfig {
    fn from(c: CameraSection) -> Self {
        CameraSimConfig {
            altitude: c.altitude,
            pitch: c.pitch_deg.to_radians(),
            focal_px: c.focal_px,
            width: c.width,
            height: c.height,
            landmarks: c.landmarks,
            landmark_noise: c.landmark_noise,
        }
    }
}

/// Mission settings plus the artifacts they run against. Relative paths
/// are resolved against the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    /// Output directory of `lsvl worldgen`.
    pub world: PathBuf,
    /// Descriptor map written by `lsvl precompute`.
    pub map: PathBuf,
    /// Histogram model from `lsvl calibrate`; needed for bayesian runs.
    pub calibration: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub waypoints: Option<Vec<[f64; 2]>>,
    pub ul: f64,
    pub max_updates: usize,
    /// Meters of odometry std per meter travelled.
    pub sigma_xy_rate: f64,
    /// Degrees of heading std per meter travelled.
    pub sigma_theta_deg_rate: f64,
    pub sigma_v_deg: f64,
    pub sensor_noise_scale: f64,
    pub likelihood: Likelihood,
    pub match_prior: f64,
    #[serde(rename = "D")]
    pub d: usize,
    pub w: f64,
    pub out_res: f64,
    pub convergence_threshold: f64,
    /// Expected map resolution; checked against the map header when set.
    pub rxy: Option<f64>,
    pub ntheta: Option<usize>,
    pub camera: Option<CameraSection>,
}

impl Default for RunConfigFile {
    fn default() -> Self {
        let m = MissionConfig::default();
        Self {
            world: PathBuf::new(),
            map: PathBuf::new(),
            calibration: None,
            output: None,
            seed: m.seed,
            waypoints: None,
            ul: m.u_l,
            max_updates: m.max_updates,
            sigma_xy_rate: m.noise.sigma_xy_rate,
            sigma_theta_deg_rate: 0.15,
            sigma_v_deg: 3.0,
            sensor_noise_scale: m.sensor_noise_scale,
            likelihood: Likelihood::Bayesian,
            match_prior: m.match_prior,
            d: m.d,
            w: m.w,
            out_res: m.out_res,
            convergence_threshold: m.convergence_threshold,
            rxy: None,
            ntheta: None,
            camera: None,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize)]
pub struct RunOverrides {
    /// Mission seed (first seed of a sweep).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Expected translation resolution of the map, meters.
    #[arg(long)]
    pub rxy: Option<f64>,
    /// Expected number of heading bins in the map.
    #[arg(long)]
    pub ntheta: Option<usize>,
    /// Distance between filter updates, meters.
    #[arg(long)]
    pub ul: Option<f64>,
    /// Compass noise std, degrees.
    #[arg(long = "sigma-v-deg")]
    pub sigma_v_deg: Option<f64>,
    #[arg(long, value_enum)]
    pub likelihood: Option<Likelihood>,
    /// Descriptor dimension.
    #[arg(long = "D")]
    pub d: Option<usize>,
}

impl RunConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads, resolves relative paths and checks that referenced files exist.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.world);
        join(&mut self.map);
        if let Some(c) = self.calibration.as_mut() {
            join(c);
        }
        if let Some(o) = self.output.as_mut() {
            join(o);
        }
    }

    pub fn apply(&mut self, o: &RunOverrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.rxy {
            self.rxy = Some(v);
        }
        if let Some(v) = o.ntheta {
            self.ntheta = Some(v);
        }
        if let Some(v) = o.ul {
            self.ul = v;
        }
        if let Some(v) = o.sigma_v_deg {
            self.sigma_v_deg = v;
        }
        if let Some(v) = o.likelihood {
            self.likelihood = v;
        }
        if let Some(v) = o.d {
            self.d = v;
        }
    }

    /// Field-level checks; every message starts with the offending key.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        if self.world.as_os_str().is_empty() {
            return bad("world", "not set".into());
        }
        for name in [WORLD_MANIFEST, WORLD_MAP_RASTER, WORLD_FLIGHT_RASTER] {
            if !self.world.join(name).is_file() {
                return bad("world", format!("{} has no {name}", self.world.display()));
            }
        }
        if self.map.as_os_str().is_empty() {
            return bad("map", "not set".into());
        }
        if !self.map.is_file() {
            return bad("map", format!("no such file {}", self.map.display()));
        }
        match (&self.calibration, self.likelihood) {
            (None, Likelihood::Bayesian) => return bad("calibration", "required for bayesian likelihood".into()),
            (Some(c), _) if !c.is_file() => return bad("calibration", format!("no such file {}", c.display())),
            _ => {}
        }
        if !(self.ul > 0.0 && self.ul.is_finite()) {
            return bad("ul", format!("must be positive, got {}", self.ul));
        }
        if self.max_updates == 0 {
            return bad("max_updates", "must be at least 1".into());
        }
        if !(self.sigma_xy_rate > 0.0) {
            return bad("sigma_xy_rate", format!("must be positive, got {}", self.sigma_xy_rate));
        }
        if !(self.sigma_theta_deg_rate > 0.0) {
            return bad("sigma_theta_deg_rate", format!("must be positive, got {}", self.sigma_theta_deg_rate));
        }
        if !(self.sigma_v_deg > 0.0) {
            return bad("sigma_v_deg", format!("must be positive, got {}", self.sigma_v_deg));
        }
        if !(self.sensor_noise_scale >= 0.0) {
            return bad("sensor_noise_scale", format!("must be nonnegative, got {}", self.sensor_noise_scale));
        }
        if !(self.match_prior > 0.0 && self.match_prior < 1.0) {
            return bad("match_prior", format!("must lie in (0, 1), got {}", self.match_prior));
        }
        Ok(())
    }

    pub fn mission(&self) -> MissionConfig {
        MissionConfig {
            seed: self.seed,
            waypoints: self.waypoints.clone(),
            u_l: self.ul,
            max_updates: self.max_updates,
            noise: OdometryNoiseModel::new(self.sigma_xy_rate, self.sigma_theta_deg_rate.to_radians()),
            sigma_v: self.sigma_v_deg.to_radians(),
            sensor_noise_scale: self.sensor_noise_scale,
            likelihood: self.likelihood.into(),
            match_prior: self.match_prior,
            d: self.d,
            w: self.w,
            out_res: self.out_res,
            convergence_threshold: self.convergence_threshold,
            camera: self.camera.map(Into::into),
        }
    }
}
