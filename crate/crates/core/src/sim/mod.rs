//! Synthetic worlds, sensor streams and mission runs.

mod calibration;
mod camera;
mod mission;
mod sensors;
mod trajectory;
mod world;

pub use calibration::{sample_calibration, CalibrationSamples};
pub use camera::{CameraRig, CameraSimConfig};
pub use mission::{
    run_mission, LikelihoodMode, MissionConfig, MissionLog, MissionSummary, UpdateRecord, CSV_HEADER,
};
pub use sensors::{sample_heading, sample_odometry, TrueDelta};
pub use trajectory::{random_waypoints, Pose, Walker};
pub use world::{generate_world, mean_abs_delta, perturb, solid_raster, PerturbationConfig, WorldConfig, WorldPair};

use thiserror::Error;

use crate::belief::GridError;
use crate::descriptor::DescriptorError;
use crate::map_store::MapError;
use crate::measurement::MeasurementError;
use crate::ortho::OrthoError;
use crate::prediction::PredictionError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("mission configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Prediction(#[from] PredictionError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Ortho(#[from] OrthoError),
}
