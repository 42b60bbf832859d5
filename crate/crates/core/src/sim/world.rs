//! Procedural terrain rasters and their appearance-perturbed twins.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::map_store::{MapError, RasterMap};

/// Appearance change between the map and the flight imagery.
///
/// Each amplitude is applied with a seeded random sign; all zeros leave the
/// flight raster identical to the map raster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    /// Additive intensity offset, levels.
    pub brightness: f64,
    /// Relative contrast change around mid-gray.
    pub contrast: f64,
    /// Hue rotation about the gray axis, degrees.
    pub hue_deg: f64,
    /// Standard deviation of additive pixel noise, levels.
    pub noise_sigma: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            brightness: 15.0,
            contrast: 0.15,
            hue_deg: 12.0,
            noise_sigma: 10.0,
        }
    }
}

impl PerturbationConfig {
    pub fn none() -> Self {
        Self {
            brightness: 0.0,
            contrast: 0.0,
            hue_deg: 0.0,
            noise_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub seed: u64,
    /// Extent of the area of interest, meters; the raster starts at (0, 0).
    pub width: f64,
    pub height: f64,
    /// Extra border around the extent so rotated patches stay inside.
    pub margin: f64,
    pub gsd: f64,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
}

impl WorldConfig {
    pub fn new(seed: u64, width: f64, height: f64, gsd: f64) -> Self {
        Self {
            seed,
            width,
            height,
            margin: 100.0,
            gsd,
            perturbation: PerturbationConfig::default(),
        }
    }
}

/// The map ("satellite") raster and the imagery the vehicle observes.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldPair {
    pub map_raster: RasterMap,
    pub flight_raster: RasterMap,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform value in `[0, 1)` for a lattice point.
fn lattice(seed: u64, layer: u64, ix: i64, iy: i64) -> f64 {
    let h = splitmix(seed ^ splitmix(layer ^ splitmix(ix as u64 ^ splitmix(iy as u64))));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(seed: u64, layer: u64, x: f64, y: f64, scale: f64) -> f64 {
    let (u, v) = (x / scale, y / scale);
    let (ix, iy) = (u.floor(), v.floor());
    let (fx, fy) = (smooth(u - ix), smooth(v - iy));
    let (ix, iy) = (ix as i64, iy as i64);
    let a = lattice(seed, layer, ix, iy);
    let b = lattice(seed, layer, ix + 1, iy);
    let c = lattice(seed, layer, ix, iy + 1);
    let d = lattice(seed, layer, ix + 1, iy + 1);
    let top = a + (b - a) * fx;
    let bottom = c + (d - c) * fx;
    top + (bottom - top) * fy
}

/// Fractal sum of value noise, in `[0, 1]`.
fn fbm(seed: u64, layer: u64, x: f64, y: f64, scale: f64, octaves: u32) -> f64 {
    let (mut sum, mut amp, mut norm, mut s) = (0.0, 1.0, 0.0, scale);
    for o in 0..octaves {
        sum += amp * value_noise(seed, layer * 16 + o as u64, x, y, s);
        norm += amp;
        amp *= 0.5;
        s *= 0.5;
    }
    sum / norm
}

const FIELD_PALETTE: [[f64; 3]; 7] = [
    [205.0, 185.0, 105.0],
    [95.0, 145.0, 60.0],
    [145.0, 112.0, 80.0],
    [155.0, 185.0, 95.0],
    [92.0, 78.0, 62.0],
    [185.0, 160.0, 140.0],
    [120.0, 160.0, 110.0],
];

const ROOF_PALETTE: [[f64; 3]; 4] = [
    [175.0, 62.0, 50.0],
    [225.0, 222.0, 215.0],
    [70.0, 70.0, 78.0],
    [150.0, 95.0, 70.0],
];

struct Road {
    // unit normal and offset: points with |n·p - d| < half_width are road
    n: [f64; 2],
    d: f64,
    half_width: f64,
}

struct Terrain {
    seed: u64,
    roads: Vec<Road>,
}

impl Terrain {
    fn new(seed: u64, width: f64, height: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x526f_6164);
        let count = ((width + height) / 600.0).ceil() as usize + 2;
        let roads = (0..count)
            .map(|_| {
                let a: f64 = rng.gen_range(0.0..std::f64::consts::PI);
                let n = [a.cos(), a.sin()];
                let px = rng.gen_range(0.0..width);
                let py = rng.gen_range(0.0..height);
                Road {
                    n,
                    d: n[0] * px + n[1] * py,
                    half_width: rng.gen_range(3.0..6.0),
                }
            })
            .collect();
        Self { seed, roads }
    }

    fn field(&self, x: f64, y: f64) -> [f64; 3] {
        let s = self.seed;
        // districts of rotated parcel grids
        let district = 700.0;
        let (dx, dy) = ((x / district).floor() as i64, (y / district).floor() as i64);
        let angle = lattice(s, 20, dx, dy) * std::f64::consts::PI;
        let (sa, ca) = angle.sin_cos();
        let u = x * ca + y * sa;
        let v = -x * sa + y * ca;
        let row_h = 50.0 + 110.0 * lattice(s, 21, dx, dy);
        let row = (v / row_h).floor() as i64;
        let col_w = 60.0 + 160.0 * lattice(s, 22, row, dx * 7919 + dy);
        let shift = lattice(s, 23, row, dx) * col_w;
        let col = ((u + shift) / col_w).floor() as i64;
        let key = (row.wrapping_mul(1_000_003)) ^ col ^ (dx << 20) ^ (dy << 40);
        let pick = lattice(s, 24, key, 0);
        let base = FIELD_PALETTE[(pick * FIELD_PALETTE.len() as f64) as usize % FIELD_PALETTE.len()];
        let jitter = (lattice(s, 25, key, 1) - 0.5) * 40.0;
        // furrows along the parcel rows
        let furrow = ((v / 4.0).sin()) * 6.0;
        let grain = (fbm(s, 26, x, y, 30.0, 3) - 0.5) * 30.0;
        base.map(|c| c + jitter + furrow + grain)
    }

    fn forest(&self, x: f64, y: f64) -> [f64; 3] {
        let canopy = (fbm(self.seed, 30, x, y, 12.0, 3) - 0.5) * 60.0;
        let tone = (fbm(self.seed, 31, x, y, 150.0, 2) - 0.5) * 50.0;
        [40.0 + canopy * 0.6 + tone * 0.4, 78.0 + canopy + tone, 38.0 + canopy * 0.5]
    }

    fn water(&self, x: f64, y: f64, depth: f64) -> [f64; 3] {
        let waves = (fbm(self.seed, 40, x, y, 35.0, 3) - 0.5) * 30.0;
        let d = depth.min(1.0);
        [40.0 + 40.0 * (1.0 - d) + waves, 70.0 + 30.0 * (1.0 - d) + waves, 100.0 - 10.0 * d + waves]
    }

    fn building(&self, x: f64, y: f64) -> Option<[f64; 3]> {
        let s = self.seed;
        if fbm(s, 50, x, y, 450.0, 2) < 0.58 {
            return None;
        }
        let cell = 45.0;
        let (cx, cy) = ((x / cell).floor() as i64, (y / cell).floor() as i64);
        if lattice(s, 51, cx, cy) > 0.55 {
            return None;
        }
        let w = 10.0 + 20.0 * lattice(s, 52, cx, cy);
        let h = 10.0 + 20.0 * lattice(s, 53, cx, cy);
        let ox = (cell - w) * lattice(s, 54, cx, cy);
        let oy = (cell - h) * lattice(s, 55, cx, cy);
        let (lx, ly) = (x - cx as f64 * cell, y - cy as f64 * cell);
        if lx >= ox && lx < ox + w && ly >= oy && ly < oy + h {
            let k = (lattice(s, 56, cx, cy) * ROOF_PALETTE.len() as f64) as usize % ROOF_PALETTE.len();
            Some(ROOF_PALETTE[k])
        } else {
            None
        }
    }

    fn color(&self, x: f64, y: f64) -> [f64; 3] {
        let s = self.seed;
        let elevation = fbm(s, 1, x, y, 1100.0, 4);
        let water_level = 0.36;
        if elevation < water_level {
            return self.water(x, y, (water_level - elevation) * 12.0);
        }
        for road in &self.roads {
            let dist = (road.n[0] * x + road.n[1] * y - road.d).abs();
            if dist < road.half_width {
                return [128.0, 126.0, 122.0];
            }
            if dist < road.half_width + 1.5 {
                return [185.0, 182.0, 170.0];
            }
        }
        if let Some(roof) = self.building(x, y) {
            return roof;
        }
        if fbm(s, 2, x, y, 380.0, 3) > 0.57 {
            return self.forest(x, y);
        }
        self.field(x, y)
    }
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn render_terrain(cfg: &WorldConfig) -> RgbImage {
    let terrain = Terrain::new(cfg.seed, cfg.width, cfg.height);
    let cols = ((cfg.width + 2.0 * cfg.margin) / cfg.gsd).ceil() as u32;
    let rows = ((cfg.height + 2.0 * cfg.margin) / cfg.gsd).ceil() as u32;
    let ox = -cfg.margin;
    let oy = cfg.height + cfg.margin;
    let mut buf = vec![0u8; cols as usize * rows as usize * 3];
    buf.par_chunks_mut(cols as usize * 3).enumerate().for_each(|(r, line)| {
        let y = oy - (r as f64 + 0.5) * cfg.gsd;
        for (c, px) in line.chunks_exact_mut(3).enumerate() {
            let x = ox + (c as f64 + 0.5) * cfg.gsd;
            let rgb = terrain.color(x, y);
            px.copy_from_slice(&rgb.map(to_u8));
        }
    });
    RgbImage::from_raw(cols, rows, buf).expect("buffer size")
}

/// Rotation of RGB about the gray axis by `angle` radians.
fn hue_matrix(angle: f64) -> [[f64; 3]; 3] {
    let (s, c) = angle.sin_cos();
    let k = 1.0 / 3.0;
    let r = 1.0 / 3f64.sqrt();
    // Rodrigues with unit axis (1, 1, 1)/√3
    let a = c + (1.0 - c) * k;
    let b = (1.0 - c) * k - r * s;
    let d = (1.0 - c) * k + r * s;
    [[a, b, d], [d, a, b], [b, d, a]]
}

/// Applies a seeded appearance change to every pixel.
pub fn perturb(image: &RgbImage, cfg: &PerturbationConfig, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7065_7274);
    let mut sign = || if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let brightness = sign() * cfg.brightness;
    let contrast = 1.0 + sign() * cfg.contrast;
    let hue = hue_matrix(sign() * cfg.hue_deg.to_radians());
    let sigma = cfg.noise_sigma;
    let width = image.width() as usize;
    let mut out = image.as_raw().clone();
    out.par_chunks_mut(width * 3).enumerate().for_each(|(r, line)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64 + 1);
        let noise = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
        for px in line.chunks_exact_mut(3) {
            let p = [px[0] as f64, px[1] as f64, px[2] as f64];
            for k in 0..3 {
                let rotated = hue[k][0] * p[0] + hue[k][1] * p[1] + hue[k][2] * p[2];
                let mut v = (rotated - 128.0) * contrast + 128.0 + brightness;
                if sigma > 0.0 {
                    v += noise.sample(&mut rng);
                }
                px[k] = to_u8(v);
            }
        }
    });
    RgbImage::from_raw(image.width(), image.height(), out).expect("same size")
}

/// Mean absolute per-channel difference between two equally sized images.
pub fn mean_abs_delta(a: &RgbImage, b: &RgbImage) -> f64 {
    let total: u64 = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(x, y)| (*x as i64 - *y as i64).unsigned_abs())
        .sum();
    total as f64 / a.as_raw().len() as f64
}

/// Map raster over `[−margin, width + margin] × [−margin, height + margin]`
/// plus its perturbed flight twin.
pub fn generate_world(cfg: &WorldConfig) -> Result<WorldPair, MapError> {
    if !(cfg.width > 0.0 && cfg.height > 0.0 && cfg.gsd > 0.0 && cfg.margin >= 0.0) {
        return Err(MapError::BadRaster("world dimensions must be positive".into()));
    }
    let img = render_terrain(cfg);
    let flight = perturb(&img, &cfg.perturbation, cfg.seed);
    let (ox, oy) = (-cfg.margin, cfg.height + cfg.margin);
    Ok(WorldPair {
        map_raster: RasterMap::new(img, ox, oy, cfg.gsd)?,
        flight_raster: RasterMap::new(flight, ox, oy, cfg.gsd)?,
    })
}

/// Uniformly colored raster.
pub fn solid_raster(width: u32, height: u32, rgb: [u8; 3], origin: (f64, f64), gsd: f64) -> Result<RasterMap, MapError> {
    RasterMap::new(RgbImage::from_pixel(width, height, Rgb(rgb)), origin.0, origin.1, gsd)
}
