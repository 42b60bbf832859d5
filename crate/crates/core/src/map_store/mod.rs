//! Precomputed descriptor grid aligned voxel-for-voxel with the belief.

mod file;
mod raster;

pub use file::{
    load_map, load_map_for, predicted_file_size, read_map, save_map, write_map, MapManifest, MAP_HEADER_LEN,
    MAP_MAGIC,
};
pub use raster::{crop_rotated_patch, patch_side, raster_sidecar, RasterMap};

use rayon::prelude::*;
use thiserror::Error;

use crate::belief::GridSpec;
use crate::descriptor::{block_mean_descriptor, norm_f64, DescriptorError};
use crate::scalar::Real;

/// Per-vector norm tolerance accepted for stored maps.
pub const MAP_NORM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("invalid raster: {0}")]
    BadRaster(String),
    #[error("patch side {w} m at {out_res} m/px is not a positive pixel count")]
    BadPatchGeometry { w: f64, out_res: f64 },
    #[error("crop at ({x:.2}, {y:.2}, θ={theta:.4}) leaves the raster")]
    OutOfBounds { x: f64, y: f64, theta: f64 },
    #[error("raster does not cover voxel ({i}, {j}, {l}) with its patch margin")]
    Coverage { i: usize, j: usize, l: usize },
    #[error("descriptor: {0}")]
    Descriptor(#[from] DescriptorError),
    #[error("map data has {got} values, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("map vector at voxel {voxel} has norm {norm}")]
    NotUnit { voxel: usize, norm: f64 },
    #[error("not a descriptor map file (bad magic)")]
    BadMagic,
    #[error("corrupt map header: {0}")]
    BadHeader(String),
    #[error("map payload truncated: expected {expected} bytes")]
    Truncated { expected: u64 },
    #[error("map payload checksum mismatch")]
    Checksum,
    #[error("map grid fingerprint {found:016x} does not match expected {expected:016x}")]
    GridMismatch { expected: u64, found: u64 },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Unit descriptor per voxel, `[i][j][l][D]` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorMap<T> {
    spec: GridSpec,
    d: usize,
    data: Vec<T>,
}

impl<T: Real> DescriptorMap<T> {
    /// Validates length and that every vector has unit norm.
    pub fn from_data(spec: GridSpec, d: usize, data: Vec<T>) -> Result<Self, MapError> {
        let map = Self::from_data_unchecked(spec, d, data)?;
        for (voxel, v) in map.data.chunks_exact(d).enumerate() {
            let norm = norm_f64(v);
            if !((norm - 1.0).abs() <= MAP_NORM_TOLERANCE) {
                return Err(MapError::NotUnit { voxel, norm });
            }
        }
        Ok(map)
    }

    /// Checks only the length.
    pub fn from_data_unchecked(spec: GridSpec, d: usize, data: Vec<T>) -> Result<Self, MapError> {
        let expected = spec.len() * d;
        if d == 0 || data.len() != expected {
            return Err(MapError::LengthMismatch {
                expected,
                got: data.len(),
            });
        }
        Ok(Self { spec, d, data })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize, l: usize) -> &[T] {
        let k = self.spec.index(i, j, l) * self.d;
        &self.data[k..k + self.d]
    }

    pub fn convert<U: Real>(&self) -> DescriptorMap<U> {
        DescriptorMap {
            spec: self.spec,
            d: self.d,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// First voxel (in storage order) whose rotated patch leaves the raster.
fn first_uncovered(raster: &RasterMap, spec: &GridSpec, n: usize, out_res: f64) -> Option<(usize, usize, usize)> {
    // Every patch corner lies within this radius of the voxel center.
    let radius = (n as f64 / 2.0 - 0.5) * out_res * std::f64::consts::SQRT_2;
    for i in 0..spec.n_x {
        let x = spec.x_center(i);
        for j in 0..spec.n_y {
            let y = spec.y_center(j);
            let safe = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
                .iter()
                .all(|(sx, sy)| raster.contains(x + sx * radius, y + sy * radius));
            if safe {
                continue;
            }
            for l in 0..spec.n_theta {
                let corners = raster::patch_corners(x, y, spec.theta_center(l), n, out_res);
                if corners.iter().any(|(cx, cy)| !raster.contains(*cx, *cy)) {
                    return Some((i, j, l));
                }
            }
        }
    }
    None
}

/// Block-mean descriptor of the rotated crop at every voxel centerpoint.
pub fn precompute<T: Real>(
    raster: &RasterMap,
    spec: &GridSpec,
    w: f64,
    out_res: f64,
    d: usize,
) -> Result<DescriptorMap<T>, MapError> {
    let n = patch_side(w, out_res)?;
    // reject bad D before doing any work
    block_mean_descriptor(&crate::descriptor::Patch::<T>::filled(n, [T::zero(); 3])?, d)?;
    if let Some((i, j, l)) = first_uncovered(raster, spec, n, out_res) {
        return Err(MapError::Coverage { i, j, l });
    }
    let mut data = vec![T::zero(); spec.len() * d];
    data.par_chunks_mut(d).enumerate().for_each(|(idx, out)| {
        let (i, j, l) = spec.unravel(idx);
        let patch = raster::crop_unchecked::<T>(raster, spec.x_center(i), spec.y_center(j), spec.theta_center(l), n, out_res);
        let desc = block_mean_descriptor(&patch, d).expect("dimension checked");
        out.copy_from_slice(desc.values());
    });
    Ok(DescriptorMap {
        spec: *spec,
        d,
        data,
    })
}
