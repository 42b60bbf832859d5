//! Piecewise-linear ground tracks.

use rand::Rng;

use crate::belief::Extent;

/// Planar pose: position in meters, heading in radians from East.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// Random waypoints inside `area`, with turns of at most 120° and legs of
/// 200–700 m, until the track is at least `length` meters long.
pub fn random_waypoints<R: Rng + ?Sized>(rng: &mut R, area: Extent, length: f64) -> Vec<[f64; 2]> {
    let inside = |p: [f64; 2]| p[0] >= area.x_min && p[0] <= area.x_max && p[1] >= area.y_min && p[1] <= area.y_max;
    let mut pts = vec![[rng.gen_range(area.x_min..=area.x_max), rng.gen_range(area.y_min..=area.y_max)]];
    let mut heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut total = 0.0;
    let max_leg = 700.0f64.min((area.x_max - area.x_min).max(area.y_max - area.y_min));
    let min_leg = 200.0f64.min(max_leg * 0.5);
    while total < length {
        let last = *pts.last().expect("nonempty");
        let mut placed = false;
        for _ in 0..200 {
            let turn = rng.gen_range(-120f64..=120.0).to_radians();
            let leg = rng.gen_range(min_leg..=max_leg);
            let h = heading + turn;
            let next = [last[0] + leg * h.cos(), last[1] + leg * h.sin()];
            if inside(next) {
                pts.push(next);
                heading = h;
                total += leg;
                placed = true;
                break;
            }
        }
        if !placed {
            // boxed in: turn around toward the area center
            let c = [(area.x_min + area.x_max) / 2.0, (area.y_min + area.y_max) / 2.0];
            let leg = ((c[0] - last[0]).powi(2) + (c[1] - last[1]).powi(2)).sqrt().max(1.0);
            heading = (c[1] - last[1]).atan2(c[0] - last[0]);
            pts.push(c);
            total += leg;
        }
    }
    pts
}

/// Moves along a polyline by exact distances.
#[derive(Debug, Clone)]
pub struct Walker {
    pts: Vec<[f64; 2]>,
    seg: usize,
    along: f64,
}

impl Walker {
    /// Needs at least two distinct waypoints.
    pub fn new(pts: Vec<[f64; 2]>) -> Option<Self> {
        let pts: Vec<[f64; 2]> = pts.into_iter().fold(Vec::new(), |mut acc, p| {
            if acc.last().map_or(true, |q: &[f64; 2]| (q[0] - p[0]).hypot(q[1] - p[1]) > 1e-9) {
                acc.push(p);
            }
            acc
        });
        if pts.len() < 2 {
            return None;
        }
        Some(Self { pts, seg: 0, along: 0.0 })
    }

    fn seg_len(&self, s: usize) -> f64 {
        let (a, b) = (self.pts[s], self.pts[s + 1]);
        (b[0] - a[0]).hypot(b[1] - a[1])
    }

    pub fn pose(&self) -> Pose {
        let (a, b) = (self.pts[self.seg], self.pts[self.seg + 1]);
        let len = self.seg_len(self.seg);
        let t = self.along / len;
        Pose {
            x: a[0] + (b[0] - a[0]) * t,
            y: a[1] + (b[1] - a[1]) * t,
            theta: crate::scalar::wrap_two_pi((b[1] - a[1]).atan2(b[0] - a[0])),
        }
    }

    /// Advances `dist` meters; `None` once the track ends.
    pub fn advance(&mut self, dist: f64) -> Option<Pose> {
        let mut left = dist;
        loop {
            let room = self.seg_len(self.seg) - self.along;
            if left < room {
                self.along += left;
                return Some(self.pose());
            }
            if self.seg + 2 >= self.pts.len() {
                return None;
            }
            left -= room;
            self.seg += 1;
            self.along = 0.0;
        }
    }

    pub fn total_length(&self) -> f64 {
        (0..self.pts.len() - 1).map(|s| self.seg_len(s)).sum()
    }
}
