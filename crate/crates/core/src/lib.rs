//! Point mass filter for global visual localization on dense (x, y, θ) grids.

pub mod belief;
pub mod descriptor;
pub mod map_store;
pub mod measurement;
pub mod ortho;
pub mod prediction;
pub mod scalar;
pub mod sim;

pub use belief::{BeliefGrid, GridSpec};
pub use scalar::Real;

pub type Descriptor32 = descriptor::Descriptor<f32>;
pub type Descriptor64 = descriptor::Descriptor<f64>;
pub type Patch32 = descriptor::Patch<f32>;
pub type Patch64 = descriptor::Patch<f64>;
pub type DescriptorMap32 = map_store::DescriptorMap<f32>;
pub type DescriptorMap64 = map_store::DescriptorMap<f64>;
pub type WeightGrid32 = measurement::WeightGrid<f32>;
pub type WeightGrid64 = measurement::WeightGrid<f64>;
