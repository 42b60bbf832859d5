//! Odometry-driven prediction as three consecutive 1D convolutions.
//!
//! The x and y passes use one kernel per heading bin: the body-frame odometry
//! translation is rotated by the bin's centre heading, so mass moves in the
//! direction each hypothesis is facing. The heading pass is a single circular
//! convolution. x/y borders are zero-padded (mass can leak out), the heading
//! axis wraps.

mod kernel;
pub mod oracle;

pub use kernel::{
    build_kernel, global_shift, noise_at_distance, OdometryMeasurement, OdometryNoiseModel, ShiftKernel,
};
pub use oracle::{predict_dense_oracle, DEFAULT_ORACLE_VOXEL_LIMIT};

use rayon::prelude::*;
use thiserror::Error;

use crate::belief::{BeliefGrid, GridSpec};

#[derive(Debug, Error, PartialEq)]
pub enum PredictionError {
    #[error("{axis} kernel has {taps} taps but the axis only has {cells} cells; odometry noise too large for this map")]
    KernelTooWide {
        axis: &'static str,
        taps: usize,
        cells: usize,
    },
    #[error("odometry measurement is not finite or has negative distance")]
    BadMeasurement,
    #[error("grid has {voxels} voxels, oracle limit is {limit}")]
    TooLargeForOracle { voxels: usize, limit: usize },
}

/// Per-heading-bin x/y kernels plus the shared heading kernel.
#[derive(Debug, Clone)]
pub struct PredictionKernels {
    pub x: Vec<ShiftKernel>,
    pub y: Vec<ShiftKernel>,
    pub theta: ShiftKernel,
}

pub fn prediction_kernels(
    spec: &GridSpec,
    u: &OdometryMeasurement,
    model: &OdometryNoiseModel,
) -> Result<PredictionKernels, PredictionError> {
    if ![u.u_x, u.u_y, u.u_theta, u.u_o].iter().all(|v| v.is_finite()) || u.u_o < 0.0 {
        return Err(PredictionError::BadMeasurement);
    }
    let (sigma_xy, sigma_theta) = noise_at_distance(model, u.u_o);
    let mut x = Vec::with_capacity(spec.n_theta);
    let mut y = Vec::with_capacity(spec.n_theta);
    for l in 0..spec.n_theta {
        let (dx, dy) = global_shift(u, spec.theta_center(l));
        x.push(build_kernel(dx, sigma_xy, spec.r_xy));
        y.push(build_kernel(dy, sigma_xy, spec.r_xy));
    }
    let theta = build_kernel(u.u_theta, sigma_theta, spec.r_theta);

    let widest = |ks: &[ShiftKernel]| ks.iter().map(ShiftKernel::len).max().unwrap_or(0);
    for (axis, taps, cells) in [
        ("x", widest(&x), spec.n_x),
        ("y", widest(&y), spec.n_y),
        ("theta", theta.len(), spec.n_theta),
    ] {
        if taps > cells {
            return Err(PredictionError::KernelTooWide { axis, taps, cells });
        }
    }
    Ok(PredictionKernels { x, y, theta })
}

/// Propagates the belief through the odometry motion model.
///
/// The result is not renormalized; mass that leaves the x/y extent is lost.
pub fn predict(
    belief: &BeliefGrid,
    u: &OdometryMeasurement,
    model: &OdometryNoiseModel,
) -> Result<BeliefGrid, PredictionError> {
    let spec = *belief.spec();
    let kernels = prediction_kernels(&spec, u, model)?;
    let mut out = vec![0.0; spec.len()];
    convolve_x(&spec, belief.mass(), &mut out, &kernels.x);
    convolve_y(&spec, &mut out, &kernels.y);
    convolve_theta(&spec, &mut out, &kernels.theta);
    Ok(BeliefGrid::from_raw(spec, out))
}

/// Valid `(source index, tap)` pairs for destination `dst` on an axis of
/// length `n`, zero padding outside.
fn taps_for(kernel: &ShiftKernel, dst: usize, n: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
    kernel.taps.iter().enumerate().filter_map(move |(h, t)| {
        let src = dst as i64 - kernel.offset - h as i64;
        (src >= 0 && (src as usize) < n).then_some((src as usize, *t))
    })
}

fn convolve_x(spec: &GridSpec, input: &[f64], out: &mut [f64], kx: &[ShiftKernel]) {
    let nt = spec.n_theta;
    let row = spec.n_y * nt;
    let nx = spec.n_x;
    out.par_chunks_mut(row).enumerate().for_each(|(i, dst)| {
        let sources: Vec<Vec<(&[f64], f64)>> = kx
            .iter()
            .map(|k| {
                taps_for(k, i, nx)
                    .map(|(src, t)| (&input[src * row..(src + 1) * row], t))
                    .collect()
            })
            .collect();
        for j in 0..spec.n_y {
            let base = j * nt;
            for (l, src) in sources.iter().enumerate() {
                let idx = base + l;
                let mut acc = 0.0;
                for (r, t) in src {
                    acc += r[idx] * t;
                }
                dst[idx] = acc;
            }
        }
    });
}

fn convolve_y(spec: &GridSpec, data: &mut [f64], ky: &[ShiftKernel]) {
    let nt = spec.n_theta;
    let ny = spec.n_y;
    let row = ny * nt;
    data.par_chunks_mut(row).for_each_init(
        || vec![0.0; row],
        |tmp, slab| {
            tmp.copy_from_slice(slab);
            for j in 0..ny {
                for (l, k) in ky.iter().enumerate() {
                    let mut acc = 0.0;
                    for (src, t) in taps_for(k, j, ny) {
                        acc += tmp[src * nt + l] * t;
                    }
                    slab[j * nt + l] = acc;
                }
            }
        },
    );
}

fn convolve_theta(spec: &GridSpec, data: &mut [f64], kt: &ShiftKernel) {
    let nt = spec.n_theta;
    let n = nt as i64;
    // source bin for destination l and tap h, wrapped
    let src_of: Vec<Vec<usize>> = (0..nt)
        .map(|l| {
            (0..kt.len())
                .map(|h| (l as i64 - kt.offset - h as i64).rem_euclid(n) as usize)
                .collect()
        })
        .collect();
    let chunk = (spec.n_y * nt).max(nt);
    data.par_chunks_mut(chunk).for_each_init(
        || vec![0.0; nt],
        |tmp, slab| {
            for column in slab.chunks_mut(nt) {
                tmp.copy_from_slice(column);
                for (l, srcs) in src_of.iter().enumerate() {
                    let mut acc = 0.0;
                    for (s, t) in srcs.iter().zip(&kt.taps) {
                        acc += tmp[*s] * t;
                    }
                    column[l] = acc;
                }
            }
        },
    );
}
