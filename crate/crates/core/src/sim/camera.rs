//! Observations through a simulated downward-tilted camera.

use nalgebra::Vector3;
use rand::Rng;

use super::trajectory::Pose;
use super::SimError;
use crate::descriptor::Patch;
use crate::map_store::RasterMap;
use crate::ortho::{fit_horizontal_plane, nadir_square, orthoproject, render_ground, CameraModel};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraSimConfig {
    /// Height above ground, meters.
    pub altitude: f64,
    /// Tilt up from straight down, radians.
    pub pitch: f64,
    pub focal_px: f64,
    pub width: u32,
    pub height: u32,
    /// Ground landmarks used for the plane fit.
    pub landmarks: usize,
    /// Half-width of the uniform height error on landmarks, meters.
    pub landmark_noise: f64,
}

impl Default for CameraSimConfig {
    fn default() -> Self {
        Self {
            altitude: 92.0,
            pitch: 50f64.to_radians(),
            focal_px: 500.0,
            width: 640,
            height: 480,
            landmarks: 40,
            landmark_noise: 0.5,
        }
    }
}

/// Camera fixed to the vehicle; the local frame has its origin on the
/// ground below the vehicle and +x along the heading.
#[derive(Debug, Clone)]
pub struct CameraRig {
    pub config: CameraSimConfig,
    pub camera: CameraModel,
    /// Ground square center in the local frame for a flat, noise-free plane.
    pub offset: [f64; 2],
}

impl CameraRig {
    pub fn new(config: CameraSimConfig, side: f64) -> Result<Self, SimError> {
        let camera = CameraModel::pitched(
            config.focal_px,
            config.focal_px,
            config.width,
            config.height,
            config.altitude,
            config.pitch,
        )?;
        let square = nadir_square(&camera, 0.0, side)?;
        Ok(Self {
            config,
            camera,
            offset: [square.center.x, square.center.y],
        })
    }

    /// World position of the nominal square center for a vehicle pose.
    pub fn square_center(&self, pose: &Pose) -> (f64, f64) {
        let (s, c) = pose.theta.sin_cos();
        (
            pose.x + c * self.offset[0] - s * self.offset[1],
            pose.y + s * self.offset[0] + c * self.offset[1],
        )
    }

    /// Renders the view from `pose`, fits the ground plane to noisy
    /// landmarks and orthoprojects the nadir square.
    pub fn observe<T: Real, R: Rng + ?Sized>(
        &self,
        raster: &RasterMap,
        pose: &Pose,
        side: f64,
        out_res: f64,
        rng: &mut R,
    ) -> Result<Patch<T>, SimError> {
        let (s, c) = pose.theta.sin_cos();
        let image = render_ground(&self.camera, 0.0, |lx, ly| {
            let x = pose.x + c * lx - s * ly;
            let y = pose.y + s * lx + c * ly;
            raster.sample(x, y).unwrap_or([0.0; 3])
        });
        let cam = &self.camera;
        let mut points = Vec::with_capacity(self.config.landmarks);
        while points.len() < self.config.landmarks.max(1) {
            let u = rng.gen_range(0.0..(cam.width - 1) as f64);
            let v = rng.gen_range(0.0..(cam.height - 1) as f64);
            let d = cam.ray(u, v);
            if d.z >= -1e-9 {
                continue;
            }
            let t = -cam.position.z / d.z;
            let p = cam.position + d * t;
            let noise = if self.config.landmark_noise > 0.0 {
                rng.gen_range(-self.config.landmark_noise..=self.config.landmark_noise)
            } else {
                0.0
            };
            points.push(Vector3::new(p.x, p.y, noise));
        }
        let z0 = fit_horizontal_plane(&points)?;
        let square = nadir_square(cam, z0, side)?;
        let (patch, _) = orthoproject(&image, cam, &square, out_res)?;
        Ok(patch)
    }
}
