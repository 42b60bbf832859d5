//! Von Mises CDF by adaptive Simpson quadrature of the density.
//!
//! The unnormalized density `exp(kappa (cos x - 1))` is bounded by one for any
//! concentration, so large `kappa` never overflows. Integration is split at
//! multiples of the angular standard deviation around the mode so that sharp
//! peaks are always sampled.

use std::f64::consts::PI;

/// Absolute error budget for the normalized CDF.
pub const CDF_TOLERANCE: f64 = 1e-10;

fn density(x: f64, kappa: f64) -> f64 {
    // cos x - 1 = -2 sin²(x/2) without cancellation near the mode
    let s = (0.5 * x).sin();
    (-2.0 * kappa * s * s).exp()
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
        + adaptive(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
}

fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    adaptive(f, a, fa, b, fb, m, fm, whole, tol, 40)
}

/// Breakpoints in `(0, π)` at 1, 2, 3, .. 8 angular standard deviations, then
/// doubling.
fn breakpoints(kappa: f64) -> Vec<f64> {
    let sd = if kappa > 0.0 { 1.0 / kappa.sqrt() } else { PI };
    let mut pts: Vec<f64> = (1..=8).map(|k| k as f64 * sd).collect();
    let mut x = 16.0 * sd;
    while x < PI {
        pts.push(x);
        x *= 2.0;
    }
    pts.retain(|p| *p < PI);
    pts
}

/// Integral of the unnormalized density over `[a, b] ⊂ [-π, π]`.
fn mass_between(a: f64, b: f64, kappa: f64, tol: f64) -> f64 {
    let f = |x: f64| density(x, kappa);
    let mut cuts = vec![-PI, 0.0, PI];
    for p in breakpoints(kappa) {
        cuts.push(p);
        cuts.push(-p);
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let pieces = cuts.len() - 1;
    cuts.windows(2)
        .map(|w| {
            let lo = w[0].max(a);
            let hi = w[1].min(b);
            integrate(&f, lo, hi, tol / pieces as f64)
        })
        .sum()
}

/// Normalizing constant of the unnormalized density.
fn total_mass(kappa: f64) -> f64 {
    // rough magnitude of the integral, so the tolerance stays relative
    let scale = (2.5 / kappa.sqrt()).min(2.0 * PI);
    2.0 * mass_between(0.0, PI, kappa, 1e-14 * scale)
}

/// CDF of a von Mises(mu, kappa) evaluated at `t`, with `t` taken on the branch
/// `[mu - π, mu + π]` (values outside are clamped to it).
pub fn von_mises_cdf(t: f64, mu: f64, kappa: f64) -> f64 {
    VonMisesCdf::new(kappa).relative(t - mu)
}

/// CDF evaluator with the normalization computed once.
#[derive(Debug, Clone, Copy)]
pub struct VonMisesCdf {
    kappa: f64,
    total: f64,
}

impl VonMisesCdf {
    pub fn new(kappa: f64) -> Self {
        let kappa = kappa.max(0.0);
        let total = if kappa == 0.0 { 2.0 * PI } else { total_mass(kappa) };
        Self { kappa, total }
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// CDF at offset `x` from the mean, `x` clamped to `[-π, π]`.
    pub fn relative(&self, x: f64) -> f64 {
        let x = x.clamp(-PI, PI);
        if self.kappa == 0.0 {
            return (x + PI) / (2.0 * PI);
        }
        let tol = CDF_TOLERANCE * 1e-2 * self.total;
        // integrate the shorter tail for accuracy
        let p = if x <= 0.0 {
            mass_between(-PI, x, self.kappa, tol) / self.total
        } else {
            1.0 - mass_between(x, PI, self.kappa, tol) / self.total
        };
        p.clamp(0.0, 1.0)
    }
}
