//! Unit descriptor vectors and the block-mean reference provider.
//!
//! Partition table for [`block_mean_descriptor`] (g×g blocks, features per block):
//!
//! | D   | blocks | features          |
//! |-----|--------|-------------------|
//! | 8   | 2×2    | Y, C              |
//! | 16  | 2×2    | R, G, B, C        |
//! | 32  | 4×4    | Y, C              |
//! | 128 | 8×8    | Y, C              |
//!
//! with `Y = (R+G+B)/3` and `C = (R+G)/2 - B`. Block `k` of `g` along an axis of
//! `n` pixels covers `[floor(k·n/g), floor((k+1)·n/g))`. Vector layout is
//! feature-major: all blocks (row-major) of the first feature, then the next.

use thiserror::Error;

use crate::scalar::Real;

pub const SUPPORTED_DIMS: [usize; 4] = [8, 16, 32, 128];

/// Tolerance on `‖d‖ = 1` accepted by [`Descriptor::new`].
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Block-mean vectors shorter than this are treated as featureless.
const ZERO_NORM: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum DescriptorError {
    #[error("descriptor dimension {0} not supported (expected one of 8, 16, 32, 128)")]
    UnsupportedDim(usize),
    #[error("descriptor norm {0} is not 1")]
    NotUnit(f64),
    #[error("descriptor is empty")]
    Empty,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("patch must be square with {expected} values, got {got}")]
    BadPatchShape { expected: usize, got: usize },
    #[error("patch intensities must lie in [0, 255]")]
    IntensityOutOfRange,
    #[error("patch side {side} px is smaller than the {grid}×{grid} block grid")]
    PatchTooSmall { side: usize, grid: usize },
}

/// L2-normalized embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor<T> {
    values: Vec<T>,
}

impl<T: Real> Descriptor<T> {
    pub fn new(values: Vec<T>) -> Result<Self, DescriptorError> {
        if values.is_empty() {
            return Err(DescriptorError::Empty);
        }
        let norm = norm_f64(&values);
        if !((norm - 1.0).abs() <= UNIT_NORM_TOLERANCE) {
            return Err(DescriptorError::NotUnit(norm));
        }
        Ok(Self { values })
    }

    /// Scales `values` to unit length; zero vectors become `e1`.
    pub fn normalized(values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let values = if norm < ZERO_NORM {
            canonical(values.len())
        } else {
            values.iter().map(|v| T::lit(v / norm)).collect()
        };
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

fn canonical<T: Real>(d: usize) -> Vec<T> {
    let mut v = vec![T::zero(); d];
    v[0] = T::one();
    v
}

pub(crate) fn norm_f64<T: Real>(v: &[T]) -> f64 {
    v.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt()
}

/// Square RGB image, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch<T> {
    side: usize,
    pixels: Vec<T>,
}

impl<T: Real> Patch<T> {
    pub fn new(side: usize, pixels: Vec<T>) -> Result<Self, DescriptorError> {
        if side == 0 || pixels.len() != side * side * 3 {
            return Err(DescriptorError::BadPatchShape {
                expected: side * side * 3,
                got: pixels.len(),
            });
        }
        let max = T::lit(255.0);
        if pixels.iter().any(|p| !(*p >= T::zero() && *p <= max)) {
            return Err(DescriptorError::IntensityOutOfRange);
        }
        Ok(Self { side, pixels })
    }

    pub fn filled(side: usize, rgb: [T; 3]) -> Result<Self, DescriptorError> {
        let pixels = (0..side * side).flat_map(|_| rgb).collect();
        Self::new(side, pixels)
    }

    pub(crate) fn from_raw(side: usize, pixels: Vec<T>) -> Self {
        debug_assert_eq!(pixels.len(), side * side * 3);
        Self { side, pixels }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    /// RGB at column `c`, row `r`.
    pub fn rgb(&self, c: usize, r: usize) -> [T; 3] {
        let k = (r * self.side + c) * 3;
        [self.pixels[k], self.pixels[k + 1], self.pixels[k + 2]]
    }

    /// The patch turned by 90° counter-clockwise.
    pub fn rotate90(&self) -> Self {
        let n = self.side;
        let mut out = Vec::with_capacity(self.pixels.len());
        for r in 0..n {
            for c in 0..n {
                out.extend_from_slice(&self.rgb(n - 1 - r, c));
            }
        }
        Self::from_raw(n, out)
    }
}

#[derive(Clone, Copy)]
enum Feature {
    Luma,
    Red,
    Green,
    Blue,
    Chroma,
}

impl Feature {
    #[inline]
    fn eval(self, r: f64, g: f64, b: f64) -> f64 {
        match self {
            Feature::Luma => (r + g + b) / 3.0,
            Feature::Red => r,
            Feature::Green => g,
            Feature::Blue => b,
            Feature::Chroma => (r + g) / 2.0 - b,
        }
    }
}

fn layout(d: usize) -> Result<(usize, &'static [Feature]), DescriptorError> {
    const YC: &[Feature] = &[Feature::Luma, Feature::Chroma];
    const RGBC: &[Feature] = &[Feature::Red, Feature::Green, Feature::Blue, Feature::Chroma];
    match d {
        8 => Ok((2, YC)),
        16 => Ok((2, RGBC)),
        32 => Ok((4, YC)),
        128 => Ok((8, YC)),
        other => Err(DescriptorError::UnsupportedDim(other)),
    }
}

/// Mean-subtracted block averages, L2-normalized.
///
/// Each feature's block means are centered on their own average, so a uniform
/// brightness offset does not change the descriptor. Featureless patches map
/// to `e1`.
pub fn block_mean_descriptor<T: Real>(patch: &Patch<T>, d: usize) -> Result<Descriptor<T>, DescriptorError> {
    let (g, features) = layout(d)?;
    let n = patch.side;
    if n < g {
        return Err(DescriptorError::PatchTooSmall { side: n, grid: g });
    }
    let bounds: Vec<usize> = (0..=g).map(|k| k * n / g).collect();
    let nf = features.len();
    // sums[f][by * g + bx]
    let mut sums = vec![0.0f64; nf * g * g];
    for by in 0..g {
        for r in bounds[by]..bounds[by + 1] {
            let row = &patch.pixels[r * n * 3..(r + 1) * n * 3];
            for bx in 0..g {
                let mut acc = [0.0f64; 5];
                for px in row[bounds[bx] * 3..bounds[bx + 1] * 3].chunks_exact(3) {
                    let (pr, pg, pb) = (px[0].as_f64(), px[1].as_f64(), px[2].as_f64());
                    for (a, f) in acc.iter_mut().zip(features) {
                        *a += f.eval(pr, pg, pb);
                    }
                }
                for (fi, a) in acc.iter().take(nf).enumerate() {
                    sums[fi * g * g + by * g + bx] += a;
                }
            }
        }
    }
    for by in 0..g {
        for bx in 0..g {
            let count = ((bounds[by + 1] - bounds[by]) * (bounds[bx + 1] - bounds[bx])) as f64;
            for fi in 0..nf {
                sums[fi * g * g + by * g + bx] /= count;
            }
        }
    }
    for block in sums.chunks_exact_mut(g * g) {
        let mean = block.iter().sum::<f64>() / (g * g) as f64;
        block.iter_mut().for_each(|v| *v -= mean);
    }
    Ok(Descriptor::normalized(sums))
}

/// Euclidean distance between two descriptors, clamped to `[0, 2]`.
pub fn descriptor_distance<T: Real>(a: &Descriptor<T>, b: &Descriptor<T>) -> Result<T, DescriptorError> {
    if a.dim() != b.dim() {
        return Err(DescriptorError::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(distance_unchecked(a.values(), b.values()))
}

#[inline]
pub(crate) fn distance_unchecked<T: Real>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        let d = *x - *y;
        s = s + d * d;
    }
    s.sqrt().min(T::lit(2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_patch(seed: u64, side: usize) -> Patch<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let px = (0..side * side * 3).map(|_| rng.gen_range(0.0..255.0)).collect();
        Patch::new(side, px).unwrap()
    }

    /// Coarse random blocks, upsampled, so block means differ clearly.
    fn blocky_patch(seed: u64, side: usize) -> Patch<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = 5;
        let base: Vec<f64> = (0..cells * cells * 3).map(|_| rng.gen_range(0.0..255.0)).collect();
        let mut px = Vec::with_capacity(side * side * 3);
        for r in 0..side {
            for c in 0..side {
                let k = (r * cells / side) * cells + c * cells / side;
                px.extend_from_slice(&base[k * 3..k * 3 + 3]);
            }
        }
        Patch::new(side, px).unwrap()
    }

    /// Independent straight-line recomputation of the table in the module docs.
    fn naive(p: &Patch<f64>, d: usize) -> Vec<f64> {
        let (g, feats): (usize, Vec<fn(f64, f64, f64) -> f64>) = match d {
            8 => (2, vec![|r, g, b| (r + g + b) / 3.0, |r, g, b| (r + g) / 2.0 - b]),
            16 => (
                2,
                vec![|r, _, _| r, |_, g, _| g, |_, _, b| b, |r, g, b| (r + g) / 2.0 - b],
            ),
            32 => (4, vec![|r, g, b| (r + g + b) / 3.0, |r, g, b| (r + g) / 2.0 - b]),
            128 => (8, vec![|r, g, b| (r + g + b) / 3.0, |r, g, b| (r + g) / 2.0 - b]),
            _ => unreachable!(),
        };
        let n = p.side();
        let mut out = Vec::new();
        for f in &feats {
            let mut means = Vec::new();
            for by in 0..g {
                for bx in 0..g {
                    let (mut s, mut cnt) = (0.0, 0.0);
                    for r in 0..n {
                        for c in 0..n {
                            if by * n / g <= r && r < (by + 1) * n / g && bx * n / g <= c && c < (bx + 1) * n / g {
                                let [pr, pg, pb] = p.rgb(c, r);
                                s += f(pr, pg, pb);
                                cnt += 1.0;
                            }
                        }
                    }
                    means.push(s / cnt);
                }
            }
            let m = means.iter().sum::<f64>() / means.len() as f64;
            out.extend(means.iter().map(|v| v - m));
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        out.iter().map(|v| v / norm).collect()
    }

    #[test]
    fn constant_patch_is_e1() {
        for d in SUPPORTED_DIMS {
            let p = Patch::filled(17, [128.0f64, 128.0, 128.0]).unwrap();
            let desc = block_mean_descriptor(&p, d).unwrap();
            assert_eq!(desc.values()[0], 1.0);
            assert!(desc.values()[1..].iter().all(|v| *v == 0.0));
            let colored = Patch::filled(8, [10.3f32, 200.7, 33.1]).unwrap();
            assert_eq!(block_mean_descriptor(&colored, d).unwrap().values()[0], 1.0);
        }
    }

    #[test]
    fn half_black_half_white() {
        let n = 10;
        let mut px = Vec::new();
        for _ in 0..n {
            for c in 0..n {
                let v = if c < n / 2 { 0.0 } else { 255.0 };
                px.extend_from_slice(&[v, v, v]);
            }
        }
        let p: Patch<f64> = Patch::new(n, px).unwrap();
        let d = block_mean_descriptor(&p, 8).unwrap();
        let v = d.values();
        // luma blocks (tl, tr, bl, br), chroma all zero
        assert!((v[0] + 0.5).abs() < 1e-15 && (v[1] - 0.5).abs() < 1e-15);
        assert!((v[2] + 0.5).abs() < 1e-15 && (v[3] - 0.5).abs() < 1e-15);
        assert!(v[4..].iter().all(|x| *x == 0.0));
        assert!((norm_f64(v) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_naive_oracle() {
        for (seed, side) in [(1u64, 100usize), (2, 37), (3, 20), (4, 8)] {
            let p = random_patch(seed, side);
            for d in SUPPORTED_DIMS {
                let got = block_mean_descriptor(&p, d).unwrap();
                let want = naive(&p, d);
                let cos: f64 = got.values().iter().zip(&want).map(|(a, b)| a * b).sum();
                assert!(cos >= 1.0 - 1e-9, "seed {seed} D {d}: cos {cos}");
            }
        }
    }

    #[test]
    fn rotation_changes_descriptor() {
        for seed in 0..20 {
            let p = blocky_patch(seed, 40);
            for d in SUPPORTED_DIMS {
                let a = block_mean_descriptor(&p, d).unwrap();
                let b = block_mean_descriptor(&p.rotate90(), d).unwrap();
                let c = descriptor_distance(&a, &b).unwrap();
                assert!(c > 0.1, "seed {seed} D {d}: {c}");
            }
        }
    }

    #[test]
    fn brightness_offset_invariant() {
        let p = blocky_patch(9, 30);
        let shifted: Vec<f64> = p.pixels().iter().map(|v| v * 0.5 + 40.0).collect();
        let q = Patch::new(30, shifted).unwrap();
        let a = block_mean_descriptor(&p, 32).unwrap();
        let b = block_mean_descriptor(&q, 32).unwrap();
        assert!(descriptor_distance(&a, &b).unwrap() < 1e-12);
    }

    #[test]
    fn deterministic() {
        let p = random_patch(5, 64);
        assert_eq!(block_mean_descriptor(&p, 128).unwrap(), block_mean_descriptor(&p, 128).unwrap());
    }

    #[test]
    fn errors() {
        let p = random_patch(1, 10);
        assert_eq!(block_mean_descriptor(&p, 12).unwrap_err(), DescriptorError::UnsupportedDim(12));
        let small = random_patch(1, 4);
        assert_eq!(
            block_mean_descriptor(&small, 128).unwrap_err(),
            DescriptorError::PatchTooSmall { side: 4, grid: 8 }
        );
        assert!(Patch::new(3, vec![0.0f64; 26]).is_err());
        assert_eq!(
            Patch::new(1, vec![0.0f64, 256.0, 0.0]).unwrap_err(),
            DescriptorError::IntensityOutOfRange
        );
        assert!(matches!(Descriptor::new(vec![1.0f64, 1.0]), Err(DescriptorError::NotUnit(_))));
        let a = Descriptor::new(vec![1.0f64, 0.0]).unwrap();
        let b = Descriptor::new(vec![1.0f64, 0.0, 0.0]).unwrap();
        assert_eq!(descriptor_distance(&a, &b).unwrap_err(), DescriptorError::DimensionMismatch(2, 3));
    }

    #[test]
    fn distance_examples() {
        let a = Descriptor::new(vec![1.0f64, 0.0]).unwrap();
        let b = Descriptor::new(vec![-1.0f64, 0.0]).unwrap();
        let c = Descriptor::new(vec![0.0f64, 1.0]).unwrap();
        assert_eq!(descriptor_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(descriptor_distance(&a, &b).unwrap(), 2.0);
        assert!((descriptor_distance(&a, &c).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rotate90_moves_corner() {
        // top-left red pixel goes to bottom-left after a counter-clockwise turn
        let mut px = vec![0.0f64; 2 * 2 * 3];
        px[0] = 255.0;
        let p = Patch::new(2, px).unwrap().rotate90();
        assert_eq!(p.rgb(0, 1), [255.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn unit_norm(seed in any::<u64>(), side in 8usize..40, k in 0usize..4) {
            let d = SUPPORTED_DIMS[k];
            let p = random_patch(seed, side);
            let desc = block_mean_descriptor(&p, d).unwrap();
            prop_assert!((norm_f64(desc.values()) - 1.0).abs() < 1e-12);
            let p32 = Patch::new(side, p.pixels().iter().map(|v| *v as f32).collect()).unwrap();
            let d32 = block_mean_descriptor(&p32, d).unwrap();
            prop_assert!((norm_f64(d32.values()) - 1.0).abs() < 1e-6);
        }

        #[test]
        fn distance_in_range(seed in any::<u64>()) {
            let a = block_mean_descriptor(&random_patch(seed, 16), 16).unwrap();
            let b = block_mean_descriptor(&random_patch(seed ^ 0xabcd, 16), 16).unwrap();
            let c = descriptor_distance(&a, &b).unwrap();
            prop_assert!((0.0..=2.0).contains(&c));
        }
    }
}
