//! Labelled descriptor distances for fitting the likelihood histograms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::world::WorldPair;
use super::SimError;
use crate::belief::GridSpec;
use crate::descriptor::{block_mean_descriptor, descriptor_distance, Descriptor};
use crate::map_store::crop_rotated_patch;
use crate::scalar::{wrap_pi, Real};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CalibrationSamples {
    pub matches: Vec<f64>,
    pub nonmatches: Vec<f64>,
}

fn describe<T: Real>(
    raster: &crate::map_store::RasterMap,
    x: f64,
    y: f64,
    theta: f64,
    w: f64,
    out_res: f64,
    d: usize,
) -> Result<Descriptor<T>, SimError> {
    let patch = crop_rotated_patch::<T>(raster, x, y, theta, w, out_res)?;
    Ok(block_mean_descriptor(&patch, d)?)
}

/// Draws `pairs` random true poses. Each pose gives one match distance (to
/// the map descriptor of the voxel containing it) and one nonmatch distance
/// (to a random voxel that is not within one cell and one heading bin).
pub fn sample_calibration<T: Real>(
    world: &WorldPair,
    spec: &GridSpec,
    w: f64,
    out_res: f64,
    d: usize,
    pairs: usize,
    seed: u64,
) -> Result<CalibrationSamples, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = CalibrationSamples::default();
    for _ in 0..pairs {
        let x = rng.gen_range(spec.x_min..spec.x_max);
        let y = rng.gen_range(spec.y_min..spec.y_max);
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let (i, j, l) = spec.locate(x, y, theta).expect("sampled inside the grid");
        let obs: Descriptor<T> = describe(&world.flight_raster, x, y, theta, w, out_res, d)?;
        let hit: Descriptor<T> = describe(
            &world.map_raster,
            spec.x_center(i),
            spec.y_center(j),
            spec.theta_center(l),
            w,
            out_res,
            d,
        )?;
        out.matches.push(descriptor_distance(&obs, &hit)?.as_f64());
        let (mi, mj, ml) = loop {
            let c = (
                rng.gen_range(0..spec.n_x),
                rng.gen_range(0..spec.n_y),
                rng.gen_range(0..spec.n_theta),
            );
            let near_xy = (spec.x_center(c.0) - x).abs() < spec.r_xy && (spec.y_center(c.1) - y).abs() < spec.r_xy;
            let near_theta = wrap_pi(spec.theta_center(c.2) - theta).abs() < spec.r_theta;
            if !(near_xy && near_theta) {
                break c;
            }
        };
        let miss: Descriptor<T> = describe(
            &world.map_raster,
            spec.x_center(mi),
            spec.y_center(mj),
            spec.theta_center(ml),
            w,
            out_res,
            d,
        )?;
        out.nonmatches.push(descriptor_distance(&obs, &miss)?.as_f64());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{make_grid_spec, Extent};
    use crate::measurement::calibrate;
    use crate::sim::world::{generate_world, WorldConfig};

    fn setup() -> (WorldPair, GridSpec) {
        let world = generate_world(&WorldConfig::new(21, 1000.0, 1000.0, 2.0)).unwrap();
        let spec = make_grid_spec(Extent::square(1000.0), 10.0, 60).unwrap();
        (world, spec)
    }

    #[test]
    fn histograms_match_counting() {
        let (world, spec) = setup();
        let s = sample_calibration::<f64>(&world, &spec, 100.0, 5.0, 8, 5000, 3).unwrap();
        assert_eq!(s.matches.len(), 5000);
        let bins = 64;
        let floor = 1e-6;
        let model = calibrate(&s.matches, &s.nonmatches, bins, floor).unwrap();
        for (samples, hist) in [(&s.matches, &model.match_mass), (&s.nonmatches, &model.nonmatch_mass)] {
            // independent count, then the same pin-and-rescale by hand
            let mut counts = vec![0.0f64; bins];
            for c in samples.iter() {
                let mut b = 0;
                while b + 1 < bins && *c >= (b + 1) as f64 * 2.0 / bins as f64 {
                    b += 1;
                }
                counts[b] += 1.0;
            }
            let n = samples.len() as f64;
            let mut pinned: Vec<bool> = counts.iter().map(|c| c / n < floor).collect();
            loop {
                let k = pinned.iter().filter(|p| **p).count() as f64;
                let free: f64 = counts.iter().zip(&pinned).filter(|(_, p)| !**p).map(|(c, _)| c / n).sum();
                let scale = (1.0 - k * floor) / free;
                let more: Vec<bool> = counts
                    .iter()
                    .zip(&pinned)
                    .map(|(c, p)| *p || c / n * scale < floor)
                    .collect();
                if more == pinned {
                    for b in 0..bins {
                        let want = if pinned[b] { floor } else { counts[b] / n * scale };
                        assert!((hist[b] - want).abs() < 1e-12);
                    }
                    break;
                }
                pinned = more;
            }
        }
        // matches are closer than nonmatches on average
        let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&s.matches) + 0.3 < mean(&s.nonmatches));
    }

    #[test]
    fn weight_at_point_three_is_count_ratio() {
        let (world, spec) = setup();
        let s = sample_calibration::<f64>(&world, &spec, 100.0, 5.0, 8, 3000, 4).unwrap();
        let model = calibrate(&s.matches, &s.nonmatches, 64, 1e-6).unwrap();
        // c = 0.3 lies in bin [0.28125, 0.3125) of 64 over [0, 2]
        let in_bin = |v: &Vec<f64>| v.iter().filter(|c| (0.28125..0.3125).contains(*c)).count() as f64;
        let occupied = |v: &Vec<f64>| {
            let mut seen = std::collections::BTreeSet::new();
            for c in v {
                seen.insert(((c / 2.0 * 64.0).floor() as usize).min(63));
            }
            seen.len() as f64
        };
        let (m, n) = (in_bin(&s.matches), in_bin(&s.nonmatches));
        assert!(m > 0.0 && n > 0.0);
        // with 3000 samples every occupied bin is far above the floor, so the
        // empty bins are pinned and the rest scaled by 1 - pinned·floor
        let pm = m / 3000.0 * (1.0 - (64.0 - occupied(&s.matches)) * 1e-6);
        let pn = n / 3000.0 * (1.0 - (64.0 - occupied(&s.nonmatches)) * 1e-6);
        let want = pm / (pm + pn);
        assert!((model.match_probability(0.3, 0.5) - want).abs() < 1e-12);
    }
}
