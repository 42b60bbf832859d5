//! Georeferenced RGB raster and rotated patch extraction.

use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::MapError;
use crate::descriptor::Patch;
use crate::scalar::Real;

/// RGB orthophoto. Pixel `(c, r)` has its center at
/// `(origin_x + (c + 0.5)·gsd, origin_y − (r + 0.5)·gsd)`; the origin is the
/// top-left (north-west) corner.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterMap {
    image: RgbImage,
    origin_x: f64,
    origin_y: f64,
    gsd: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RasterGeo {
    origin_x: f64,
    origin_y: f64,
    gsd: f64,
}

/// Path of the georeferencing sidecar for a raster image file.
pub fn raster_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".geo.json");
    PathBuf::from(s)
}

impl RasterMap {
    pub fn new(image: RgbImage, origin_x: f64, origin_y: f64, gsd: f64) -> Result<Self, MapError> {
        if !(gsd.is_finite() && gsd > 0.0) {
            return Err(MapError::BadRaster(format!("gsd must be positive, got {gsd}")));
        }
        if image.width() == 0 || image.height() == 0 {
            return Err(MapError::BadRaster("empty image".into()));
        }
        if !(origin_x.is_finite() && origin_y.is_finite()) {
            return Err(MapError::BadRaster("non-finite origin".into()));
        }
        Ok(Self {
            image,
            origin_x,
            origin_y,
            gsd,
        })
    }

    pub fn image(&self) -> &RgbImage {
        &self.image
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.origin_x, self.origin_y)
    }

    pub fn gsd(&self) -> f64 {
        self.gsd
    }

    /// `(x_min, x_max, y_min, y_max)` covered by the pixels.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (
            self.origin_x,
            self.origin_x + self.image.width() as f64 * self.gsd,
            self.origin_y - self.image.height() as f64 * self.gsd,
            self.origin_y,
        )
    }

    /// Continuous pixel coordinates with integers at pixel centers.
    #[inline]
    pub fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin_x) / self.gsd - 0.5,
            (self.origin_y - y) / self.gsd - 0.5,
        )
    }

    #[inline]
    pub fn pixel_center(&self, c: u32, r: u32) -> (f64, f64) {
        (
            self.origin_x + (c as f64 + 0.5) * self.gsd,
            self.origin_y - (r as f64 + 0.5) * self.gsd,
        )
    }

    /// Whether bilinear sampling at `(x, y)` stays inside the pixel centers.
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (u, v) = self.to_pixel(x, y);
        let eps = 1e-9;
        u >= -eps && v >= -eps && u <= self.image.width() as f64 - 1.0 + eps && v <= self.image.height() as f64 - 1.0 + eps
    }

    /// Bilinear RGB sample at a world position.
    pub fn sample(&self, x: f64, y: f64) -> Option<[f64; 3]> {
        if !self.contains(x, y) {
            return None;
        }
        let (u, v) = self.to_pixel(x, y);
        Some(self.sample_pixel(u, v))
    }

    #[inline]
    fn sample_pixel(&self, u: f64, v: f64) -> [f64; 3] {
        let w = self.image.width() as usize;
        let h = self.image.height() as usize;
        let u = u.clamp(0.0, (w - 1) as f64);
        let v = v.clamp(0.0, (h - 1) as f64);
        let c0 = (u as usize).min(w - 1);
        let r0 = (v as usize).min(h - 1);
        let c1 = (c0 + 1).min(w - 1);
        let r1 = (r0 + 1).min(h - 1);
        let fu = u - c0 as f64;
        let fv = v - r0 as f64;
        let raw = self.image.as_raw();
        let (i00, i10) = ((r0 * w + c0) * 3, (r0 * w + c1) * 3);
        let (i01, i11) = ((r1 * w + c0) * 3, (r1 * w + c1) * 3);
        let mut out = [0.0; 3];
        for k in 0..3 {
            let top = raw[i00 + k] as f64 * (1.0 - fu) + raw[i10 + k] as f64 * fu;
            let bottom = raw[i01 + k] as f64 * (1.0 - fu) + raw[i11 + k] as f64 * fu;
            out[k] = top * (1.0 - fv) + bottom * fv;
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MapError> {
        let path = path.as_ref();
        self.image.save_with_format(path, image::ImageFormat::Png)?;
        let geo = RasterGeo {
            origin_x: self.origin_x,
            origin_y: self.origin_y,
            gsd: self.gsd,
        };
        fs::write(raster_sidecar(path), serde_json::to_vec_pretty(&geo)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MapError> {
        let path = path.as_ref();
        let image = image::open(path)?.to_rgb8();
        let geo: RasterGeo = serde_json::from_slice(&fs::read(raster_sidecar(path))?)?;
        Self::new(image, geo.origin_x, geo.origin_y, geo.gsd)
    }
}

/// Side length in pixels of a `w` meter patch at `out_res` m/px.
pub fn patch_side(w: f64, out_res: f64) -> Result<usize, MapError> {
    if !(w.is_finite() && w > 0.0 && out_res.is_finite() && out_res > 0.0) {
        return Err(MapError::BadPatchGeometry { w, out_res });
    }
    let n = (w / out_res).round();
    if n < 1.0 {
        return Err(MapError::BadPatchGeometry { w, out_res });
    }
    Ok(n as usize)
}

/// World positions of the four outermost patch pixel centers.
pub(crate) fn patch_corners(x: f64, y: f64, theta: f64, n: usize, out_res: f64) -> [(f64, f64); 4] {
    let h = (n as f64 / 2.0 - 0.5) * out_res;
    let (s, c) = theta.sin_cos();
    [(-h, -h), (h, -h), (h, h), (-h, h)].map(|(a, b)| (x + a * c - b * s, y + a * s + b * c))
}

/// Bilinear crop of the `w`×`w` meter square centered at `(x, y)`.
///
/// Patch columns run along heading `theta` and rows run to its right, so at
/// `theta = 0` the patch is an upright sub-image of the raster.
pub fn crop_rotated_patch<T: Real>(
    raster: &RasterMap,
    x: f64,
    y: f64,
    theta: f64,
    w: f64,
    out_res: f64,
) -> Result<Patch<T>, MapError> {
    let n = patch_side(w, out_res)?;
    if patch_corners(x, y, theta, n, out_res)
        .iter()
        .any(|(cx, cy)| !raster.contains(*cx, *cy))
    {
        return Err(MapError::OutOfBounds { x, y, theta });
    }
    Ok(crop_unchecked(raster, x, y, theta, n, out_res))
}

/// Crop without the bounds check; samples are clamped to the raster.
pub(crate) fn crop_unchecked<T: Real>(raster: &RasterMap, x: f64, y: f64, theta: f64, n: usize, out_res: f64) -> Patch<T> {
    let (s, c) = theta.sin_cos();
    let half = n as f64 / 2.0;
    let inv = 1.0 / raster.gsd;
    // pixel coordinates are affine in (pc, pr)
    let step = out_res * inv;
    let (du_c, dv_c) = (c * step, -s * step);
    let (du_r, dv_r) = (s * step, c * step);
    let a0 = (0.5 - half) * out_res;
    let b0 = -(0.5 - half) * out_res;
    let u0 = (x + a0 * c - b0 * s - raster.origin_x) * inv - 0.5;
    let v0 = (raster.origin_y - (y + a0 * s + b0 * c)) * inv - 0.5;
    let w = raster.image.width() as usize;
    let h = raster.image.height() as usize;
    let (umax, vmax) = ((w - 1) as f64, (h - 1) as f64);
    let raw = raster.image.as_raw().as_slice();
    let mut px = vec![T::zero(); n * n * 3];
    for (pr, row) in px.chunks_exact_mut(n * 3).enumerate() {
        let (ur, vr) = (u0 + pr as f64 * du_r, v0 + pr as f64 * dv_r);
        for (pc, out) in row.chunks_exact_mut(3).enumerate() {
            let u = (ur + pc as f64 * du_c).clamp(0.0, umax);
            let v = (vr + pc as f64 * dv_c).clamp(0.0, vmax);
            let (c0, r0) = (u as usize, v as usize);
            let c1 = if c0 + 1 < w { c0 + 1 } else { c0 };
            let r1 = if r0 + 1 < h { r0 + 1 } else { r0 };
            let (fu, fv) = (u - c0 as f64, v - r0 as f64);
            let top0 = &raw[(r0 * w + c0) * 3..][..3];
            let top1 = &raw[(r0 * w + c1) * 3..][..3];
            let bot0 = &raw[(r1 * w + c0) * 3..][..3];
            let bot1 = &raw[(r1 * w + c1) * 3..][..3];
            for k in 0..3 {
                let top = top0[k] as f64 + (top1[k] as f64 - top0[k] as f64) * fu;
                let bottom = bot0[k] as f64 + (bot1[k] as f64 - bot0[k] as f64) * fu;
                out[k] = T::lit(top + (bottom - top) * fv);
            }
        }
    }
    Patch::from_raw(n, px)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use std::f64::consts::FRAC_PI_2;

    fn pattern(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |c, r| Rgb([(c * 7 % 256) as u8, (r * 11 % 256) as u8, ((c * r) % 251) as u8]))
    }

    #[test]
    fn axis_aligned_crop_is_sub_image() {
        let img = pattern(50, 40);
        let raster = RasterMap::new(img.clone(), 1000.0, 2000.0, 2.0).unwrap();
        // 10 px patch whose top-left pixel is (c=12, r=7)
        let x = 1000.0 + (12.0 + 5.0) * 2.0;
        let y = 2000.0 - (7.0 + 5.0) * 2.0;
        let p: Patch<f64> = crop_rotated_patch(&raster, x, y, 0.0, 20.0, 2.0).unwrap();
        for r in 0..10 {
            for c in 0..10 {
                let want = img.get_pixel(12 + c, 7 + r).0.map(|v| v as f64);
                assert_eq!(p.rgb(c as usize, r as usize), want);
            }
        }
    }

    #[test]
    fn quarter_turn_permutes_pixels() {
        let img = pattern(60, 60);
        let raster = RasterMap::new(img, 0.0, 60.0, 1.0).unwrap();
        let (x, y, n) = (30.0, 30.0, 16usize);
        let p0: Patch<f64> = crop_rotated_patch(&raster, x, y, 0.0, n as f64, 1.0).unwrap();
        let p90: Patch<f64> = crop_rotated_patch(&raster, x, y, FRAC_PI_2, n as f64, 1.0).unwrap();
        for r in 0..n {
            for c in 0..n {
                let a = p90.rgb(c, r);
                let b = p0.rgb(r, n - 1 - c);
                for k in 0..3 {
                    assert!((a[k] - b[k]).abs() <= 1.0, "({c},{r})");
                }
            }
        }
    }

    #[test]
    fn gradient_raster_rotated_crop() {
        // intensity = 0.5·x + 0.25·y at pixel centers, exact under bilinear
        let gsd = 1.0;
        let img = RgbImage::from_fn(200, 200, |c, r| {
            let x = c as f64 + 0.5;
            let y = 200.0 - (r as f64 + 0.5);
            let v = (0.5 * x + 0.25 * y).round() as u8;
            Rgb([v, v, v])
        });
        let raster = RasterMap::new(img, 0.0, 200.0, gsd).unwrap();
        let theta = 30f64.to_radians();
        let (cx, cy) = (100.0, 100.0);
        let p: Patch<f64> = crop_rotated_patch(&raster, cx, cy, theta, 40.0, 2.0).unwrap();
        let (s, c) = theta.sin_cos();
        for pr in 0..20 {
            for pc in 0..20 {
                let a = (pc as f64 + 0.5 - 10.0) * 2.0;
                let b = -(pr as f64 + 0.5 - 10.0) * 2.0;
                let x = cx + a * c - b * s;
                let y = cy + a * s + b * c;
                let want = 0.5 * x + 0.25 * y;
                assert!((p.rgb(pc, pr)[0] - want).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn out_of_bounds() {
        let raster = RasterMap::new(pattern(20, 20), 0.0, 20.0, 1.0).unwrap();
        assert!(crop_rotated_patch::<f64>(&raster, 10.0, 10.0, 0.0, 20.0, 1.0).is_ok());
        assert!(matches!(
            crop_rotated_patch::<f64>(&raster, 10.0, 10.0, 0.3, 20.0, 1.0),
            Err(MapError::OutOfBounds { .. })
        ));
        assert!(crop_rotated_patch::<f64>(&raster, 3.0, 10.0, 0.0, 10.0, 1.0).is_err());
    }

    #[test]
    fn sample_and_bounds() {
        let raster = RasterMap::new(pattern(4, 3), 10.0, 5.0, 0.5).unwrap();
        assert_eq!(raster.bounds(), (10.0, 12.0, 3.5, 5.0));
        let (x, y) = raster.pixel_center(2, 1);
        assert_eq!(raster.sample(x, y).unwrap(), raster.image().get_pixel(2, 1).0.map(|v| v as f64));
        assert!(raster.sample(10.0, 5.0).is_none());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("world.png");
        let raster = RasterMap::new(pattern(30, 20), -5.0, 7.5, 0.25).unwrap();
        raster.save(&path).unwrap();
        assert_eq!(RasterMap::load(&path).unwrap(), raster);
    }
}
