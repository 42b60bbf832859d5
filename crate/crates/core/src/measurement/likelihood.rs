//! Map-matching weights from descriptor distances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{MeasurementError, WeightGrid};
use crate::descriptor::{distance_unchecked, Descriptor};
use crate::map_store::DescriptorMap;
use crate::scalar::Real;

pub const DEFAULT_CALIBRATION_BINS: usize = 64;
pub const DEFAULT_CALIBRATION_FLOOR: f64 = 1e-6;

/// Upper end of the distance range between unit vectors.
const MAX_DISTANCE: f64 = 2.0;

fn check_dims<T: Real>(w: &Descriptor<T>, map: &DescriptorMap<T>) -> Result<(), MeasurementError> {
    if w.dim() != map.dim() {
        return Err(MeasurementError::DimensionMismatch {
            expected: map.dim(),
            got: w.dim(),
        });
    }
    Ok(())
}

/// Applies `f(distance)` to every voxel of the map.
fn map_distances<T: Real>(w: &Descriptor<T>, map: &DescriptorMap<T>, f: impl Fn(T) -> T + Sync) -> Vec<T> {
    let d = map.dim();
    let query = w.values();
    let mut out = vec![T::zero(); map.spec().len()];
    const CHUNK: usize = 1 << 14;
    out.par_chunks_mut(CHUNK)
        .zip(map.data().par_chunks(CHUNK * d))
        .for_each(|(dst, vecs)| {
            for (o, v) in dst.iter_mut().zip(vecs.chunks_exact(d)) {
                *o = f(distance_unchecked(query, v));
            }
        });
    out
}

/// `(2 - c) / 2` where `c` is the Euclidean descriptor distance.
pub fn linear_weights<T: Real>(w: &Descriptor<T>, map: &DescriptorMap<T>) -> Result<WeightGrid<T>, MeasurementError> {
    check_dims(w, map)?;
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let values = map_distances(w, map, |c| ((two - c) * half).max(T::zero()).min(T::one()));
    Ok(WeightGrid::from_values_unchecked(*map.spec(), values))
}

/// Histogram densities of descriptor distance for true and false matches.
///
/// Serialized as `{bins, floor, match: [...], nonmatch: [...]}` with masses in
/// bin order over `[0, 2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationModel {
    pub bins: usize,
    pub floor: f64,
    #[serde(rename = "match")]
    pub match_mass: Vec<f64>,
    #[serde(rename = "nonmatch")]
    pub nonmatch_mass: Vec<f64>,
}

impl CalibrationModel {
    pub fn validate(&self) -> Result<(), MeasurementError> {
        let bad = |m: &str| Err(MeasurementError::BadCalibration(m.to_string()));
        if self.bins == 0 {
            return bad("zero bins (uncalibrated)");
        }
        if self.match_mass.len() != self.bins || self.nonmatch_mass.len() != self.bins {
            return bad("histogram length differs from bin count");
        }
        if !(self.floor > 0.0) {
            return bad("smoothing floor must be positive");
        }
        for h in [&self.match_mass, &self.nonmatch_mass] {
            if h.iter().any(|m| !m.is_finite() || *m <= 0.0) {
                return bad("histogram masses must be positive");
            }
        }
        Ok(())
    }

    pub fn bin_of(&self, c: f64) -> usize {
        let b = (c / MAX_DISTANCE * self.bins as f64).floor();
        if b <= 0.0 {
            0
        } else {
            (b as usize).min(self.bins - 1)
        }
    }

    /// Posterior probability of the match class for each bin.
    pub fn match_probabilities(&self, match_prior: f64) -> Vec<f64> {
        self.match_mass
            .iter()
            .zip(&self.nonmatch_mass)
            .map(|(pm, pn)| {
                let a = pm * match_prior;
                a / (a + pn * (1.0 - match_prior))
            })
            .collect()
    }

    pub fn match_probability(&self, c: f64, match_prior: f64) -> f64 {
        let b = self.bin_of(c);
        let a = self.match_mass[b] * match_prior;
        a / (a + self.nonmatch_mass[b] * (1.0 - match_prior))
    }
}

/// Normalized histogram over `[0, 2]` where no bin falls below `floor`.
///
/// Bins under the floor are pinned to it and the remaining mass is scaled
/// proportionally, repeating until no scaled bin drops under the floor.
fn floored_histogram(samples: &[f64], bins: usize, floor: f64) -> Vec<f64> {
    let probe = CalibrationModel {
        bins,
        floor,
        match_mass: vec![],
        nonmatch_mass: vec![],
    };
    let mut counts = vec![0usize; bins];
    for c in samples {
        counts[probe.bin_of(*c)] += 1;
    }
    let n = samples.len() as f64;
    let raw: Vec<f64> = counts.iter().map(|c| *c as f64 / n).collect();
    let mut pinned = vec![false; bins];
    loop {
        let free: f64 = raw.iter().zip(&pinned).filter(|(_, p)| !**p).map(|(m, _)| *m).sum();
        let budget = 1.0 - floor * pinned.iter().filter(|p| **p).count() as f64;
        let scale = budget / free;
        let mut changed = false;
        for b in 0..bins {
            if !pinned[b] && raw[b] * scale < floor {
                pinned[b] = true;
                changed = true;
            }
        }
        if !changed {
            return raw
                .iter()
                .zip(&pinned)
                .map(|(m, p)| if *p { floor } else { m * scale })
                .collect();
        }
    }
}

/// Builds the calibration histograms from labelled distances.
pub fn calibrate(
    match_distances: &[f64],
    nonmatch_distances: &[f64],
    bins: usize,
    floor: f64,
) -> Result<CalibrationModel, MeasurementError> {
    if match_distances.is_empty() {
        return Err(MeasurementError::EmptySamples("match"));
    }
    if nonmatch_distances.is_empty() {
        return Err(MeasurementError::EmptySamples("nonmatch"));
    }
    if bins == 0 || !(floor > 0.0) || floor * bins as f64 >= 1.0 {
        return Err(MeasurementError::BadCalibration(format!(
            "need bins >= 1 and 0 < floor < 1/bins (bins {bins}, floor {floor})"
        )));
    }
    for c in match_distances.iter().chain(nonmatch_distances) {
        if !(0.0..=MAX_DISTANCE).contains(c) {
            return Err(MeasurementError::DistanceOutOfRange(*c));
        }
    }
    Ok(CalibrationModel {
        bins,
        floor,
        match_mass: floored_histogram(match_distances, bins, floor),
        nonmatch_mass: floored_histogram(nonmatch_distances, bins, floor),
    })
}

/// Match-class probability per voxel with equal class priors.
pub fn bayesian_weights<T: Real>(
    w: &Descriptor<T>,
    map: &DescriptorMap<T>,
    calib: &CalibrationModel,
) -> Result<WeightGrid<T>, MeasurementError> {
    bayesian_weights_with_prior(w, map, calib, 0.5)
}

pub fn bayesian_weights_with_prior<T: Real>(
    w: &Descriptor<T>,
    map: &DescriptorMap<T>,
    calib: &CalibrationModel,
    match_prior: f64,
) -> Result<WeightGrid<T>, MeasurementError> {
    check_dims(w, map)?;
    calib.validate()?;
    if !(match_prior > 0.0 && match_prior < 1.0) {
        return Err(MeasurementError::BadCalibration(format!("match prior {match_prior} outside (0, 1)")));
    }
    let table: Vec<T> = calib.match_probabilities(match_prior).into_iter().map(T::lit).collect();
    let scale = calib.bins as f64 / MAX_DISTANCE;
    let last = calib.bins - 1;
    let values = map_distances(w, map, |c| {
        let b = (c.as_f64() * scale).floor();
        let b = if b <= 0.0 { 0 } else { (b as usize).min(last) };
        table[b]
    });
    Ok(WeightGrid::from_values_unchecked(*map.spec(), values))
}
