//! Planar homography from four point correspondences (normalized DLT).

use nalgebra::{Matrix3, Point2, SMatrix, Vector3};

use super::OrthoError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    pub m: Matrix3<f64>,
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn normalizer(pts: &[Point2<f64>; 4]) -> Matrix3<f64> {
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / 4.0;
    let mean = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / 4.0;
    let s = if mean > 0.0 { std::f64::consts::SQRT_2 / mean } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn collinear(a: &Point2<f64>, b: &Point2<f64>, c: &Point2<f64>, scale: f64) -> bool {
    let area = (b - a).perp(&(c - a));
    area.abs() <= 1e-9 * scale * scale
}

impl Homography {
    pub fn from_correspondences(src: &[Point2<f64>; 4], dst: &[Point2<f64>; 4]) -> Result<Self, OrthoError> {
        for pts in [src, dst] {
            let scale = pts
                .iter()
                .flat_map(|p| pts.iter().map(move |q| (p - q).norm()))
                .fold(0.0, f64::max);
            for skip in 0..4 {
                let t: Vec<_> = (0..4).filter(|k| *k != skip).map(|k| pts[k]).collect();
                if collinear(&t[0], &t[1], &t[2], scale) {
                    return Err(OrthoError::Degenerate);
                }
            }
        }
        let ns = normalizer(src);
        let nd = normalizer(dst);
        // 8 equations, padded with a zero row so the SVD yields the null vector
        let mut a = SMatrix::<f64, 9, 9>::zeros();
        for k in 0..4 {
            let p = ns * Vector3::new(src[k].x, src[k].y, 1.0);
            let q = nd * Vector3::new(dst[k].x, dst[k].y, 1.0);
            let (x, y, u, v) = (p.x / p.z, p.y / p.z, q.x / q.z, q.y / q.z);
            let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
            let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
            for c in 0..9 {
                a[(2 * k, c)] = r0[c];
                a[(2 * k + 1, c)] = r1[c];
            }
        }
        let svd = a.svd(false, true);
        let v_t = svd.v_t.ok_or(OrthoError::Degenerate)?;
        let (idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .ok_or(OrthoError::Degenerate)?;
        let h = v_t.row(idx);
        let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
        let nd_inv = nd.try_inverse().ok_or(OrthoError::Degenerate)?;
        let m = nd_inv * hn * ns;
        if !m.iter().all(|v| v.is_finite()) || m[(2, 2)].abs() < 1e-300 {
            return Err(OrthoError::Degenerate);
        }
        Ok(Self { m: m / m[(2, 2)] })
    }

    pub fn apply(&self, p: &Point2<f64>) -> Point2<f64> {
        let q = self.m * Vector3::new(p.x, p.y, 1.0);
        Point2::new(q.x / q.z, q.y / q.z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: [(f64, f64); 4]) -> [Point2<f64>; 4] {
        v.map(|(x, y)| Point2::new(x, y))
    }

    #[test]
    fn recovers_known_homography() {
        let truth = Matrix3::new(1.2, 0.1, 30.0, -0.05, 0.9, 12.0, 1e-4, -2e-4, 1.0);
        let src = pts([(0.0, 0.0), (100.0, 0.0), (100.0, 80.0), (0.0, 80.0)]);
        let apply = |p: &Point2<f64>| {
            let q = truth * Vector3::new(p.x, p.y, 1.0);
            Point2::new(q.x / q.z, q.y / q.z)
        };
        let dst = src.map(|p| apply(&p));
        let h = Homography::from_correspondences(&src, &dst).unwrap();
        assert!((h.m - truth).abs().max() < 1e-9);
        let probe = Point2::new(37.0, 61.0);
        assert!((h.apply(&probe) - apply(&probe)).norm() < 1e-8);
    }

    #[test]
    fn rejects_collinear() {
        let src = pts([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (0.0, 1.0)]);
        let dst = pts([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        assert_eq!(Homography::from_correspondences(&src, &dst).unwrap_err(), OrthoError::Degenerate);
        assert_eq!(Homography::from_correspondences(&dst, &src).unwrap_err(), OrthoError::Degenerate);
    }
}
