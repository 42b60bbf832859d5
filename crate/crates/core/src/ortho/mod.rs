//! Orthoprojection of a tilted camera view onto a top-down ground patch.
//!
//! Frames: `L` is the gravity-aligned local frame (z up). Camera axes follow
//! the pinhole convention (x right, y down, z along the optical axis). The
//! ground patch is axis-aligned in `L`: patch columns run along `L`'s +x and
//! patch rows run along −y.

mod homography;

pub use homography::Homography;

use image::RgbImage;
use nalgebra::{Matrix3, Point2, Vector3};
use thiserror::Error;

use crate::descriptor::Patch;
use crate::map_store::patch_side;
use crate::scalar::Real;

/// Minimum depth (meters along the optical axis) of a visible point.
const MIN_DEPTH: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum OrthoError {
    #[error("invalid camera: {0}")]
    BadCamera(String),
    #[error("plane fit needs at least one point")]
    NoPoints,
    #[error("no fully visible {side} m square exists on the ground plane")]
    Infeasible { side: f64 },
    #[error("square corners project to degenerate (collinear) image points")]
    Degenerate,
    #[error("square corner projects outside the image")]
    NotVisible,
    #[error("patch side {w} m at {out_res} m/px is not a positive pixel count")]
    BadPatchGeometry { w: f64, out_res: f64 },
}

/// Pinhole camera posed in `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Columns are the camera x, y, z axes expressed in `L`.
    pub rotation: Matrix3<f64>,
    /// Camera center in `L`.
    pub position: Vector3<f64>,
}

impl CameraModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        rotation: Matrix3<f64>,
        position: Vector3<f64>,
    ) -> Result<Self, OrthoError> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(OrthoError::BadCamera("focal lengths must be positive".into()));
        }
        if width < 2 || height < 2 {
            return Err(OrthoError::BadCamera("image must be at least 2×2".into()));
        }
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(err <= 1e-9) || rotation.determinant() < 0.0 {
            return Err(OrthoError::BadCamera("rotation is not orthonormal".into()));
        }
        if !position.iter().all(|v| v.is_finite()) {
            return Err(OrthoError::BadCamera("non-finite position".into()));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation,
            position,
        })
    }

    /// Camera at `altitude` above the origin of `L`, looking along +x and
    /// tilted `pitch` radians up from straight down.
    pub fn pitched(fx: f64, fy: f64, width: u32, height: u32, altitude: f64, pitch: f64) -> Result<Self, OrthoError> {
        let (s, c) = pitch.sin_cos();
        let x_axis = Vector3::new(0.0, -1.0, 0.0);
        let y_axis = Vector3::new(-c, 0.0, -s);
        let z_axis = Vector3::new(s, 0.0, -c);
        let rotation = Matrix3::from_columns(&[x_axis, y_axis, z_axis]);
        Self::new(
            fx,
            fy,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
            rotation,
            Vector3::new(0.0, 0.0, altitude),
        )
    }

    /// Point in camera coordinates.
    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.position)
    }

    /// Pixel coordinates (integers at pixel centers) of a point in `L`.
    pub fn project(&self, p: &Vector3<f64>) -> Option<Point2<f64>> {
        let q = self.to_camera(p);
        if q.z <= MIN_DEPTH {
            return None;
        }
        Some(Point2::new(self.fx * q.x / q.z + self.cx, self.fy * q.y / q.z + self.cy))
    }

    /// Viewing ray through pixel `(u, v)`, in `L`.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        self.rotation * Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    fn in_image(&self, p: &Point2<f64>, tol: f64) -> bool {
        p.x >= -tol && p.y >= -tol && p.x <= self.width as f64 - 1.0 + tol && p.y <= self.height as f64 - 1.0 + tol
    }
}

/// Horizontal square on the ground plane, axis-aligned in `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundSquare {
    pub center: Vector3<f64>,
    pub side: f64,
}

impl GroundSquare {
    /// Rotation part of the `L` → square frame transform (always identity).
    pub fn rotation(&self) -> Matrix3<f64> {
        Matrix3::identity()
    }

    /// Translation part of the `L` → square frame transform.
    pub fn translation(&self) -> Vector3<f64> {
        -self.center
    }

    pub fn to_square_frame(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }

    /// Corners in `L`, counter-clockwise from (−x, −y).
    pub fn corners(&self) -> [Vector3<f64>; 4] {
        let h = self.side / 2.0;
        [(-h, -h), (h, -h), (h, h), (-h, h)].map(|(a, b)| self.center + Vector3::new(a, b, 0.0))
    }
}

/// Height of the best-fitting plane with normal +z: the mean point height.
pub fn fit_horizontal_plane(points: &[Vector3<f64>]) -> Result<f64, OrthoError> {
    if points.is_empty() {
        return Err(OrthoError::NoPoints);
    }
    Ok(points.iter().map(|p| p.z).sum::<f64>() / points.len() as f64)
}

/// Half-plane `a·s + b ≥ 0` in square-center coordinates.
#[derive(Debug, Clone, Copy)]
struct HalfPlane {
    a: [f64; 2],
    b: f64,
}

impl HalfPlane {
    fn eval(&self, s: [f64; 2]) -> f64 {
        self.a[0] * s[0] + self.a[1] * s[1] + self.b
    }
}

/// Visibility constraints on the square center for one corner offset.
///
/// With camera coordinates `q = Rᵀ(s + o − c)`, each condition
/// `fx·q_x + (cx − lo)·q_z ≥ 0` etc. is linear in the center `s`.
fn corner_constraints(cam: &CameraModel, offset: Vector3<f64>, z0: f64) -> [HalfPlane; 5] {
    let rt = cam.rotation.transpose();
    // q = M s_xy + q0
    let m = [rt.column(0).into_owned(), rt.column(1).into_owned()];
    let q0 = rt * (Vector3::new(0.0, 0.0, z0) + offset - cam.position);
    let lin = |coef: Vector3<f64>, extra: f64| HalfPlane {
        a: [coef.dot(&m[0]), coef.dot(&m[1])],
        b: coef.dot(&q0) + extra,
    };
    let umax = cam.width as f64 - 1.0;
    let vmax = cam.height as f64 - 1.0;
    [
        // u ≥ 0
        lin(Vector3::new(cam.fx, 0.0, cam.cx), 0.0),
        // u ≤ umax
        lin(Vector3::new(-cam.fx, 0.0, umax - cam.cx), 0.0),
        lin(Vector3::new(0.0, cam.fy, cam.cy), 0.0),
        lin(Vector3::new(0.0, -cam.fy, vmax - cam.cy), 0.0),
        // depth
        lin(Vector3::new(0.0, 0.0, 1.0), -MIN_DEPTH),
    ]
}

/// The square of side `side` on plane `z = z0` that is fully visible and
/// whose center is horizontally closest to the camera's nadir point.
///
/// The visible centers form a convex polygon (intersection of linear
/// half-planes), so the optimum is the nadir point itself, its projection
/// onto one constraint line, or a vertex of two lines.
pub fn nadir_square(camera: &CameraModel, z0: f64, side: f64) -> Result<GroundSquare, OrthoError> {
    if !(side > 0.0 && side.is_finite()) {
        return Err(OrthoError::Infeasible { side });
    }
    if !(camera.position.z > z0) {
        return Err(OrthoError::Infeasible { side });
    }
    let h = side / 2.0;
    let mut planes = Vec::with_capacity(20);
    for (a, b) in [(-h, -h), (h, -h), (h, h), (-h, h)] {
        for mut hp in corner_constraints(camera, Vector3::new(a, b, 0.0), z0) {
            let n = (hp.a[0] * hp.a[0] + hp.a[1] * hp.a[1]).sqrt();
            if n > 0.0 {
                hp.a = [hp.a[0] / n, hp.a[1] / n];
                hp.b /= n;
                planes.push(hp);
            } else if hp.b < 0.0 {
                return Err(OrthoError::Infeasible { side });
            }
        }
    }
    let nadir = [camera.position.x, camera.position.y];
    let scale = 1.0 + camera.position.z.abs() + side;
    let tol = 1e-9 * scale;
    let feasible = |s: [f64; 2]| planes.iter().all(|p| p.eval(s) >= -tol);

    let mut candidates = vec![nadir];
    for p in &planes {
        let d = p.eval(nadir);
        candidates.push([nadir[0] - d * p.a[0], nadir[1] - d * p.a[1]]);
    }
    for (k, p) in planes.iter().enumerate() {
        for q in &planes[k + 1..] {
            let det = p.a[0] * q.a[1] - p.a[1] * q.a[0];
            if det.abs() < 1e-12 {
                continue;
            }
            let x = (-p.b * q.a[1] + q.b * p.a[1]) / det;
            let y = (-p.a[0] * q.b + q.a[0] * p.b) / det;
            candidates.push([x, y]);
        }
    }
    let dist2 = |s: &[f64; 2]| (s[0] - nadir[0]).powi(2) + (s[1] - nadir[1]).powi(2);
    let best = candidates
        .into_iter()
        .filter(|s| s.iter().all(|v| v.is_finite()) && feasible(*s))
        .min_by(|a, b| dist2(a).total_cmp(&dist2(b)))
        .ok_or(OrthoError::Infeasible { side })?;
    Ok(GroundSquare {
        center: Vector3::new(best[0], best[1], z0),
        side,
    })
}

/// Homography from square-local ground coordinates `(a, b)` to image pixels.
pub fn square_homography(camera: &CameraModel, square: &GroundSquare) -> Result<Homography, OrthoError> {
    let h = square.side / 2.0;
    let local = [(-h, -h), (h, -h), (h, h), (-h, h)];
    let mut src = [Point2::origin(); 4];
    let mut dst = [Point2::origin(); 4];
    for (k, (a, b)) in local.iter().enumerate() {
        src[k] = Point2::new(*a, *b);
        let p = square.center + Vector3::new(*a, *b, 0.0);
        dst[k] = camera.project(&p).ok_or(OrthoError::NotVisible)?;
        if !camera.in_image(&dst[k], 1e-6) {
            return Err(OrthoError::NotVisible);
        }
    }
    Homography::from_correspondences(&src, &dst)
}

/// Bilinear sample of an image at continuous pixel coordinates, clamped.
pub fn sample_bilinear(image: &RgbImage, u: f64, v: f64) -> [f64; 3] {
    let w = image.width();
    let h = image.height();
    let u = u.clamp(0.0, (w - 1) as f64);
    let v = v.clamp(0.0, (h - 1) as f64);
    let c0 = (u.floor() as u32).min(w - 1);
    let r0 = (v.floor() as u32).min(h - 1);
    let c1 = (c0 + 1).min(w - 1);
    let r1 = (r0 + 1).min(h - 1);
    let fu = u - c0 as f64;
    let fv = v - r0 as f64;
    let p = |c, r| image.get_pixel(c, r).0;
    let (p00, p10, p01, p11) = (p(c0, r0), p(c1, r0), p(c0, r1), p(c1, r1));
    let mut out = [0.0; 3];
    for k in 0..3 {
        let top = p00[k] as f64 * (1.0 - fu) + p10[k] as f64 * fu;
        let bottom = p01[k] as f64 * (1.0 - fu) + p11[k] as f64 * fu;
        out[k] = top * (1.0 - fv) + bottom * fv;
    }
    out
}

/// Square-local ground offset `(a, b)` of patch pixel `(pc, pr)`.
#[inline]
pub fn patch_pixel_offset(pc: usize, pr: usize, n: usize, out_res: f64) -> (f64, f64) {
    let half = n as f64 / 2.0;
    ((pc as f64 + 0.5 - half) * out_res, -(pr as f64 + 0.5 - half) * out_res)
}

/// Warps the pixels covering `square` into a top-down patch at `out_res`.
pub fn orthoproject<T: Real>(
    image: &RgbImage,
    camera: &CameraModel,
    square: &GroundSquare,
    out_res: f64,
) -> Result<(Patch<T>, GroundSquare), OrthoError> {
    let n = patch_side(square.side, out_res).map_err(|_| OrthoError::BadPatchGeometry {
        w: square.side,
        out_res,
    })?;
    let hom = square_homography(camera, square)?;
    let mut px = Vec::with_capacity(n * n * 3);
    for pr in 0..n {
        for pc in 0..n {
            let (a, b) = patch_pixel_offset(pc, pr, n, out_res);
            let uv = hom.apply(&Point2::new(a, b));
            px.extend(sample_bilinear(image, uv.x, uv.y).iter().map(|v| T::lit(*v)));
        }
    }
    Ok((Patch::from_raw(n, px), *square))
}

/// Renders the plane `z = z0` through `camera`; `ground(x, y)` gives the RGB
/// color at a point of `L`. Pixels that do not see the plane are black.
pub fn render_ground(camera: &CameraModel, z0: f64, ground: impl Fn(f64, f64) -> [f64; 3]) -> RgbImage {
    RgbImage::from_fn(camera.width, camera.height, |c, r| {
        let d = camera.ray(c as f64, r as f64);
        if d.z >= -1e-12 {
            return image::Rgb([0, 0, 0]);
        }
        let t = (z0 - camera.position.z) / d.z;
        let p = camera.position + d * t;
        let rgb = ground(p.x, p.y);
        image::Rgb(rgb.map(|v| v.round().clamp(0.0, 255.0) as u8))
    })
}
