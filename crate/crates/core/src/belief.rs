//! Discretized (x, y, θ) state space and the piecewise-constant belief over it.
//!
//! Storage is a dense `[i][j][l]` array (x-major, heading innermost) so that the
//! heading column of one planar cell is contiguous. Descriptor maps use the same
//! ordering with the descriptor vector appended as the innermost axis.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::measurement::WeightGrid;
use crate::scalar::{block_sum, wrap_two_pi, Real};

const CHECKPOINT_MAGIC: &[u8; 8] = b"LSVLBEL1";

#[derive(Debug, Error)]
pub enum GridError {
    #[error("resolution must be positive and finite, got {0}")]
    BadResolution(f64),
    #[error("heading bin count must be at least 1")]
    NoHeadingBins,
    #[error("extent is empty or inverted: [{min}, {max}]")]
    BadExtent { min: f64, max: f64 },
    #[error("grid dimensions differ: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("mass array has {got} entries, grid has {expected} voxels")]
    LengthMismatch { expected: usize, got: usize },
    #[error("belief entries must be finite and nonnegative")]
    InvalidMass,
    #[error("weighting annihilated all probability mass")]
    ZeroMass,
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a belief checkpoint (bad magic)")]
    BadMagic,
}

/// Planar rectangle in map meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Extent {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn square(side: f64) -> Self {
        Self::new(0.0, side, 0.0, side)
    }
}

/// Geometry of the voxel grid shared by belief, weights and descriptor map.
///
/// `x_max`/`y_max` are the covered bounds `x_min + n_x * r_xy`, which may exceed
/// the requested extent when it is not a whole number of cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub r_xy: f64,
    pub r_theta: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub n_theta: usize,
}

fn cells_along(min: f64, max: f64, res: f64) -> Result<usize, GridError> {
    if !(min.is_finite() && max.is_finite()) || max <= min {
        return Err(GridError::BadExtent { min, max });
    }
    // the epsilon keeps exact multiples (3000 / 10) from rounding up a cell
    let n = ((max - min) / res - 1e-9).ceil();
    Ok((n as usize).max(1))
}

/// Builds the grid geometry; `r_theta` is always `2π / n_theta`.
pub fn make_grid_spec(extent: Extent, r_xy: f64, n_theta: usize) -> Result<GridSpec, GridError> {
    if !(r_xy.is_finite() && r_xy > 0.0) {
        return Err(GridError::BadResolution(r_xy));
    }
    if n_theta == 0 {
        return Err(GridError::NoHeadingBins);
    }
    let n_x = cells_along(extent.x_min, extent.x_max, r_xy)?;
    let n_y = cells_along(extent.y_min, extent.y_max, r_xy)?;
    Ok(GridSpec::from_parts(
        extent.x_min,
        extent.y_min,
        r_xy,
        n_x,
        n_y,
        n_theta,
    ))
}

impl GridSpec {
    /// Reconstructs a spec from its stored parameters (file headers).
    pub fn from_parts(x_min: f64, y_min: f64, r_xy: f64, n_x: usize, n_y: usize, n_theta: usize) -> Self {
        Self {
            x_min,
            x_max: x_min + n_x as f64 * r_xy,
            y_min,
            y_max: y_min + n_y as f64 * r_xy,
            r_xy,
            r_theta: TAU / n_theta as f64,
            n_x,
            n_y,
            n_theta,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_x, self.n_y, self.n_theta)
    }

    pub fn len(&self) -> usize {
        self.n_x * self.n_y * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, l: usize) -> usize {
        (i * self.n_y + j) * self.n_theta + l
    }

    /// Inverse of [`GridSpec::index`].
    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let l = idx % self.n_theta;
        let ij = idx / self.n_theta;
        (ij / self.n_y, ij % self.n_y, l)
    }

    pub fn x_lower(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.r_xy
    }

    pub fn y_lower(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.r_xy
    }

    pub fn theta_lower(&self, l: usize) -> f64 {
        l as f64 * self.r_theta
    }

    pub fn theta_upper(&self, l: usize) -> f64 {
        (l + 1) as f64 * self.r_theta
    }

    pub fn x_center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.r_xy
    }

    pub fn y_center(&self, j: usize) -> f64 {
        self.y_min + (j as f64 + 0.5) * self.r_xy
    }

    pub fn theta_center(&self, l: usize) -> f64 {
        (l as f64 + 0.5) * self.r_theta
    }

    /// Voxel containing a continuous pose, if it lies inside the grid.
    pub fn locate(&self, x: f64, y: f64, theta: f64) -> Option<(usize, usize, usize)> {
        if x < self.x_min || x >= self.x_max || y < self.y_min || y >= self.y_max {
            return None;
        }
        let i = (((x - self.x_min) / self.r_xy) as usize).min(self.n_x - 1);
        let j = (((y - self.y_min) / self.r_xy) as usize).min(self.n_y - 1);
        let l = ((wrap_two_pi(theta) / self.r_theta) as usize).min(self.n_theta - 1);
        Some((i, j, l))
    }

    /// Stable 64-bit fingerprint of the stored grid parameters.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update((self.n_x as u32).to_le_bytes());
        hasher.update((self.n_y as u32).to_le_bytes());
        hasher.update((self.n_theta as u32).to_le_bytes());
        hasher.update(self.x_min.to_le_bytes());
        hasher.update(self.y_min.to_le_bytes());
        hasher.update(self.r_xy.to_le_bytes());
        let digest = hasher.finalize();
        let mut first = [0u8; 8];
        first.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(first)
    }
}

/// Piecewise-constant probability over the voxels of a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefGrid {
    spec: GridSpec,
    mass: Vec<f64>,
}

/// Every voxel gets `1 / (n_x n_y n_theta)`.
pub fn init_uniform(spec: GridSpec) -> BeliefGrid {
    let n = spec.len();
    BeliefGrid {
        spec,
        mass: vec![1.0 / n as f64; n],
    }
}

impl BeliefGrid {
    pub fn from_mass(spec: GridSpec, mass: Vec<f64>) -> Result<Self, GridError> {
        if mass.len() != spec.len() {
            return Err(GridError::LengthMismatch {
                expected: spec.len(),
                got: mass.len(),
            });
        }
        if mass.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(GridError::InvalidMass);
        }
        Ok(Self { spec, mass })
    }

    /// All probability in a single voxel.
    pub fn point_mass(spec: GridSpec, i: usize, j: usize, l: usize) -> Self {
        let mut mass = vec![0.0; spec.len()];
        mass[spec.index(i, j, l)] = 1.0;
        Self { spec, mass }
    }

    /// Wraps a buffer produced by an operation that already guarantees the
    /// invariants (nonnegative, finite, correct length).
    pub(crate) fn from_raw(spec: GridSpec, mass: Vec<f64>) -> Self {
        debug_assert_eq!(mass.len(), spec.len());
        Self { spec, mass }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn into_mass(self) -> Vec<f64> {
        self.mass
    }

    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        self.mass[self.spec.index(i, j, l)]
    }

    pub fn total(&self) -> f64 {
        block_sum(&self.mass)
    }

    /// Writes the `LSVLBEL1` debug checkpoint.
    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<(), GridError> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(CHECKPOINT_MAGIC)?;
        for n in [self.spec.n_x, self.spec.n_y, self.spec.n_theta] {
            out.write_all(&(n as u32).to_le_bytes())?;
        }
        for v in [self.spec.x_min, self.spec.y_min, self.spec.r_xy] {
            out.write_all(&v.to_le_bytes())?;
        }
        for m in &self.mass {
            out.write_all(&m.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self, GridError> {
        let mut input = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(GridError::BadMagic);
        }
        let mut u = [0u8; 4];
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            input.read_exact(&mut u)?;
            *d = u32::from_le_bytes(u) as usize;
        }
        let mut f = [0u8; 8];
        let mut geo = [0f64; 3];
        for g in geo.iter_mut() {
            input.read_exact(&mut f)?;
            *g = f64::from_le_bytes(f);
        }
        if !(geo[2] > 0.0) || dims.iter().any(|d| *d == 0) {
            return Err(GridError::BadResolution(geo[2]));
        }
        let spec = GridSpec::from_parts(geo[0], geo[1], geo[2], dims[0], dims[1], dims[2]);
        let mut mass = Vec::with_capacity(spec.len());
        for _ in 0..spec.len() {
            input.read_exact(&mut f)?;
            mass.push(f64::from_le_bytes(f));
        }
        Self::from_mass(spec, mass)
    }
}

/// Elementwise product of the belief with every weight grid, renormalized.
///
/// Fails with [`GridError::ZeroMass`] when the product carries no mass; the
/// caller decides whether to re-initialize.
pub fn apply_weights<T: Real>(belief: BeliefGrid, weights: &[&WeightGrid<T>]) -> Result<BeliefGrid, GridError> {
    let spec = belief.spec;
    for w in weights {
        if w.spec().dims() != spec.dims() {
            return Err(GridError::DimensionMismatch {
                expected: spec.dims(),
                got: w.spec().dims(),
            });
        }
    }
    let mut mass = belief.mass;
    let slab = (spec.n_y * spec.n_theta).max(1);
    let partial: Vec<f64> = mass
        .par_chunks_mut(slab)
        .enumerate()
        .map(|(s, chunk)| {
            let base = s * slab;
            for w in weights {
                let wv = &w.values()[base..base + chunk.len()];
                for (m, x) in chunk.iter_mut().zip(wv) {
                    *m *= x.as_f64();
                }
            }
            chunk.iter().sum::<f64>()
        })
        .collect();
    let total: f64 = partial.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(GridError::ZeroMass);
    }
    let inv = 1.0 / total;
    mass.par_iter_mut().for_each(|m| *m *= inv);
    Ok(BeliefGrid { spec, mass })
}

/// Point estimate and translation spread of a belief.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEstimate {
    pub x: f64,
    pub y: f64,
    /// Circular mean heading in `[0, 2π)`.
    pub theta: f64,
    /// Probability-weighted RMS distance of voxel centers from `(x, y)`.
    pub sigma_xy: f64,
}

/// Probability-weighted mean position, circular mean heading and spread.
pub fn estimate_pose(belief: &BeliefGrid) -> Result<PoseEstimate, GridError> {
    let spec = &belief.spec;
    let nt = spec.n_theta;
    // marginal over heading per planar cell, plus heading marginal
    let mut planar = vec![0.0; spec.n_x * spec.n_y];
    let mut heading = vec![0.0; nt];
    for (cell, column) in belief.mass.chunks(nt).enumerate() {
        let mut s = 0.0;
        for (h, m) in heading.iter_mut().zip(column) {
            *h += m;
            s += m;
        }
        planar[cell] = s;
    }
    let total = block_sum(&planar);
    if !(total > 0.0) {
        return Err(GridError::ZeroMass);
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for i in 0..spec.n_x {
        let row = &planar[i * spec.n_y..(i + 1) * spec.n_y];
        let row_mass: f64 = row.iter().sum();
        sx += row_mass * spec.x_center(i);
        for (j, m) in row.iter().enumerate() {
            sy += m * spec.y_center(j);
        }
    }
    let x = sx / total;
    let y = sy / total;
    let mut var = 0.0;
    for i in 0..spec.n_x {
        let dx = spec.x_center(i) - x;
        for j in 0..spec.n_y {
            let m = planar[i * spec.n_y + j];
            if m > 0.0 {
                let dy = spec.y_center(j) - y;
                var += m * (dx * dx + dy * dy);
            }
        }
    }
    let (mut s, mut c) = (0.0, 0.0);
    for (l, m) in heading.iter().enumerate() {
        let t = spec.theta_center(l);
        s += m * t.sin();
        c += m * t.cos();
    }
    Ok(PoseEstimate {
        x,
        y,
        theta: wrap_two_pi(s.atan2(c)),
        sigma_xy: (var / total).max(0.0).sqrt(),
    })
}

/// Strictly below the threshold counts as converged.
pub fn converged(estimate: &PoseEstimate, threshold: f64) -> bool {
    estimate.sigma_xy < threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::WeightGrid;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(nx: usize, ny: usize, nt: usize) -> GridSpec {
        make_grid_spec(Extent::new(0.0, nx as f64 * 10.0, 0.0, ny as f64 * 10.0), 10.0, nt).unwrap()
    }

    fn random_belief(spec: GridSpec, rng: &mut ChaCha8Rng) -> BeliefGrid {
        let mut m: Vec<f64> = (0..spec.len()).map(|_| rng.gen::<f64>()).collect();
        let s: f64 = m.iter().sum();
        m.iter_mut().for_each(|v| *v /= s);
        BeliefGrid::from_mass(spec, m).unwrap()
    }

    #[test]
    fn grid_spec_examples() {
        let s = make_grid_spec(Extent::square(10_000.0), 10.0, 60).unwrap();
        assert_eq!((s.n_x, s.n_y, s.n_theta), (1000, 1000, 60));
        assert!((s.r_theta.to_degrees() - 6.0).abs() < 1e-12);
        assert!((s.r_theta * s.n_theta as f64 - TAU).abs() < 1e-12);

        let s = make_grid_spec(Extent::square(10.0), 10.0, 1).unwrap();
        assert_eq!(s.dims(), (1, 1, 1));

        let s = make_grid_spec(Extent::square(95.0), 10.0, 4).unwrap();
        assert_eq!(s.n_x, 10);
        assert_eq!(s.x_max, 100.0);
        assert_eq!(s.x_lower(3), 30.0);
    }

    #[test]
    fn grid_spec_rejects_bad_input() {
        assert!(matches!(
            make_grid_spec(Extent::square(100.0), 0.0, 4),
            Err(GridError::BadResolution(_))
        ));
        assert!(make_grid_spec(Extent::square(100.0), -1.0, 4).is_err());
        assert!(matches!(
            make_grid_spec(Extent::square(100.0), 10.0, 0),
            Err(GridError::NoHeadingBins)
        ));
        assert!(matches!(
            make_grid_spec(Extent::new(5.0, 1.0, 0.0, 10.0), 1.0, 1),
            Err(GridError::BadExtent { .. })
        ));
    }

    #[test]
    fn uniform_init() {
        let b = init_uniform(spec(1, 1, 1));
        assert_eq!(b.mass(), &[1.0]);
        let b = init_uniform(spec(2, 2, 2));
        assert!(b.mass().iter().all(|m| *m == 0.125));
    }

    #[test]
    fn uniform_init_large_sums_to_one() {
        let s = make_grid_spec(Extent::square(10_000.0), 10.0, 60).unwrap();
        let b = init_uniform(s);
        assert_eq!(b.mass()[0], 1.0 / 6e7);
        assert!((b.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_weights_are_identity() {
        let s = spec(3, 4, 5);
        let w = WeightGrid::<f64>::filled(s, 0.7);
        let b = apply_weights(init_uniform(s), &[&w]).unwrap();
        let u = 1.0 / s.len() as f64;
        assert!(b.mass().iter().all(|m| (m - u).abs() < 1e-15));
    }

    #[test]
    fn two_voxel_weighting() {
        let s = spec(2, 1, 1);
        let b = BeliefGrid::from_mass(s, vec![0.5, 0.5]).unwrap();
        let w = WeightGrid::from_values(s, vec![1.0f64, 0.0]).unwrap();
        let out = apply_weights(b, &[&w]).unwrap();
        assert_eq!(out.mass(), &[1.0, 0.0]);
    }

    #[test]
    fn zero_product_is_an_error() {
        let s = spec(2, 1, 1);
        let b = BeliefGrid::from_mass(s, vec![1.0, 0.0]).unwrap();
        let w = WeightGrid::from_values(s, vec![0.0f64, 1.0]).unwrap();
        assert!(matches!(apply_weights(b, &[&w]), Err(GridError::ZeroMass)));
    }

    #[test]
    fn mismatched_weights_rejected() {
        let b = init_uniform(spec(2, 2, 2));
        let w = WeightGrid::<f32>::filled(spec(2, 2, 3), 1.0);
        assert!(matches!(
            apply_weights(b, &[&w]),
            Err(GridError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn two_grids_equal_their_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = spec(6, 5, 4);
        let b = random_belief(s, &mut rng);
        let w1: Vec<f64> = (0..s.len()).map(|_| rng.gen()).collect();
        let w2: Vec<f64> = (0..s.len()).map(|_| rng.gen()).collect();
        let prod: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a * b).collect();
        let g1 = WeightGrid::from_values(s, w1).unwrap();
        let g2 = WeightGrid::from_values(s, w2).unwrap();
        let gp = WeightGrid::from_values(s, prod).unwrap();
        let a = apply_weights(b.clone(), &[&g1, &g2]).unwrap();
        let c = apply_weights(b, &[&gp]).unwrap();
        for (x, y) in a.mass().iter().zip(c.mass()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn point_mass_estimate_is_voxel_center() {
        let s = spec(5, 7, 8);
        let b = BeliefGrid::point_mass(s, 3, 2, 5);
        let e = estimate_pose(&b).unwrap();
        assert_eq!(e.x, s.x_center(3));
        assert_eq!(e.y, s.y_center(2));
        assert!((e.theta - s.theta_center(5)).abs() < 1e-12);
        assert_eq!(e.sigma_xy, 0.0);
    }

    #[test]
    fn heading_split_averages_circularly() {
        // bins centred on 0° and 90°: 4 bins of 90°, centres at 45°, 135°, ...
        // so use 8 bins of 45° and pick centres 22.5° and 112.5°
        let s = spec(1, 1, 8);
        let mut m = vec![0.0; 8];
        m[0] = 0.5;
        m[2] = 0.5;
        let e = estimate_pose(&BeliefGrid::from_mass(s, m).unwrap()).unwrap();
        assert!((e.theta.to_degrees() - 67.5).abs() < 1e-9);

        // equal mass at +θ and -θ averages to 0, not π
        let mut m = vec![0.0; 8];
        m[0] = 0.5; // 22.5°
        m[7] = 0.5; // 337.5° = -22.5°
        let e = estimate_pose(&BeliefGrid::from_mass(s, m).unwrap()).unwrap();
        let d = e.theta.min(TAU - e.theta);
        assert!(d < 1e-9, "theta {}", e.theta);
    }

    #[test]
    fn heading_split_zero_and_ninety() {
        // 360 bins of 1°: centres at 0.5° and 90.5° -> mean 45.5°
        let s = make_grid_spec(Extent::square(10.0), 10.0, 360).unwrap();
        let mut m = vec![0.0; 360];
        m[0] = 0.5;
        m[90] = 0.5;
        let e = estimate_pose(&BeliefGrid::from_mass(s, m).unwrap()).unwrap();
        assert!((e.theta.to_degrees() - 45.5).abs() < 1e-9);
    }

    #[test]
    fn split_translation_spread() {
        // voxel centres at x = 5 and x = 105 (11 cells of 10 m)
        let s = spec(11, 1, 1);
        let mut m = vec![0.0; 11];
        m[0] = 0.5;
        m[10] = 0.5;
        let e = estimate_pose(&BeliefGrid::from_mass(s, m).unwrap()).unwrap();
        assert!((e.x - 55.0).abs() < 1e-12);
        assert!((e.sigma_xy - 50.0).abs() < 1e-12);
    }

    #[test]
    fn convergence_is_strict() {
        let e = |s| PoseEstimate {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
            sigma_xy: s,
        };
        assert!(converged(&e(0.0), 100.0));
        assert!(!converged(&e(100.0), 100.0));
        assert!(converged(&e(99.999), 100.0));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = make_grid_spec(Extent::new(-50.0, 30.0, 10.0, 60.0), 10.0, 6).unwrap();
        let b = random_belief(s, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.bin");
        b.save_checkpoint(&p).unwrap();
        let meta = std::fs::metadata(&p).unwrap();
        assert_eq!(meta.len() as usize, 8 + 12 + 24 + 8 * s.len());
        let back = BeliefGrid::load_checkpoint(&p).unwrap();
        assert_eq!(back, b);

        std::fs::write(&p, b"NOTABELF").unwrap();
        assert!(matches!(BeliefGrid::load_checkpoint(&p), Err(GridError::BadMagic)));
    }

    #[test]
    fn locate_round_trips_centres() {
        let s = spec(4, 3, 6);
        for (i, j, l) in [(0, 0, 0), (3, 2, 5), (1, 1, 3)] {
            assert_eq!(
                s.locate(s.x_center(i), s.y_center(j), s.theta_center(l)),
                Some((i, j, l))
            );
            assert_eq!(s.unravel(s.index(i, j, l)), (i, j, l));
        }
        assert_eq!(s.locate(-1.0, 0.0, 0.0), None);
    }

    proptest! {
        #[test]
        fn weighting_is_scale_invariant(seed in 0u64..1000, scale in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = spec(4, 3, 5);
            let b = random_belief(s, &mut rng);
            let w: Vec<f64> = (0..s.len()).map(|_| rng.gen::<f64>() * 0.9 + 0.05).collect();
            let ws: Vec<f64> = w.iter().map(|v| v * scale).collect();
            let a = apply_weights(b.clone(), &[&WeightGrid::from_values(s, w).unwrap()]).unwrap();
            // scaled weights may leave [0, 1]; the product is still well-defined
            let c = apply_weights(b, &[&WeightGrid::from_values_unchecked(s, ws)]).unwrap();
            for (x, y) in a.mass().iter().zip(c.mass()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn weighting_preserves_normalization(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = spec(5, 4, 6);
            let b = random_belief(s, &mut rng);
            let w: Vec<f64> = (0..s.len()).map(|_| rng.gen::<f64>()).collect();
            let out = apply_weights(b, &[&WeightGrid::from_values(s, w).unwrap()]).unwrap();
            prop_assert!((out.total() - 1.0).abs() < 1e-9);
            prop_assert!(out.mass().iter().all(|m| *m >= 0.0));
        }
    }
}
