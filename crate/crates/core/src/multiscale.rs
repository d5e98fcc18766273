//! Multiscale slope detection on sorted one-dimensional samples.
//!
//! For order statistics `x_(j) < x_(k)` the spacing statistic
//! `T_jk = sum_{j<i<k} (2 (x_(i) - x_(j)) / (x_(k) - x_(j)) - 1)` is a sum of
//! `k - j - 1` independent `U(-1, 1)` variables when the density is flat on
//! `[x_(j), x_(k)]`. Large positive values mean points crowd towards the
//! right end (rising density), large negative values towards the left end
//! (falling density). Intervals are scanned on a geometric grid of lengths
//! with an additive scale penalty; the remaining threshold `kappa` is
//! calibrated by Monte Carlo on uniform samples.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sampling::RngStream;
use crate::stats::empirical_quantile;
use crate::{Error, Result};

pub const DEFAULT_LEVEL: f64 = 0.9;
pub const DEFAULT_MC_REPS: usize = 1000;
pub const DEFAULT_CALIBRATION_SEED: u64 = 0x5EED_CA1B;
const MIN_LENGTH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeDirection {
    Rising,
    Falling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeInterval {
    pub lo: usize,
    pub hi: usize,
    pub direction: SlopeDirection,
    /// `T_jk / sqrt((k - j - 1) / 3)`.
    pub standardized_stat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub n: usize,
    pub level: f64,
    pub kappa: f64,
    pub mc_reps: usize,
    pub seed: u64,
}

/// Interval lengths `k - j`: 5, 8, 13, 21, ... (ratio about 1.6), capped
/// at `n - 1`.
pub fn scale_grid(n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut len = MIN_LENGTH;
    while len < n {
        out.push(len);
        len = ((len as f64 * 1.6).round() as usize).max(len + 1);
    }
    out
}

fn penalty(n: usize, len: usize) -> f64 {
    (2.0 * (core::f64::consts::E * n as f64 / len as f64).ln()).sqrt()
}

/// Prefix sums carried in two parts, so differences of nearby partial sums
/// keep their low-order bits.
struct PrefixSums {
    hi: Vec<f64>,
    lo: Vec<f64>,
}

impl PrefixSums {
    fn new(values: &[f64]) -> Self {
        let mut hi = Vec::with_capacity(values.len() + 1);
        let mut lo = Vec::with_capacity(values.len() + 1);
        let (mut s, mut c) = (0.0f64, 0.0f64);
        hi.push(0.0);
        lo.push(0.0);
        for &v in values {
            let t = s + v;
            c += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
            s = t;
            hi.push(s);
            lo.push(c);
        }
        Self { hi, lo }
    }

    /// `sum values[a..b]`.
    fn range(&self, a: usize, b: usize) -> f64 {
        (self.hi[b] - self.hi[a]) + (self.lo[b] - self.lo[a])
    }
}

/// Visits every admissible interval with a defined statistic, passing
/// `(j, k, standardized T_jk, penalty)`.
fn scan(values: &[f64], mut visit: impl FnMut(usize, usize, f64, f64)) {
    let n = values.len();
    let sums = PrefixSums::new(values);
    for len in scale_grid(n) {
        let pen = penalty(n, len);
        let m = (len - 1) as f64;
        let sd = (m / 3.0).sqrt();
        for j in 0..n - len {
            let k = j + len;
            let (xj, xk) = (values[j], values[k]);
            let width = xk - xj;
            if !(width > 0.0) {
                continue;
            }
            let inner = sums.range(j + 1, k) - m * xj;
            let t = 2.0 * inner / width - m;
            visit(j, k, t / sd, pen);
        }
    }
}

/// `max_{j,k} (|T_jk| / sd - penalty)` over the grid.
pub fn max_statistic(values: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    scan(values, |_, _, z, pen| best = best.max(z.abs() - pen));
    best
}

/// Monte Carlo calibration of `kappa` on `mc_reps` sorted uniform samples
/// of size `n`; replicate `r` draws from stream `(seed, r)`.
pub fn dw_calibrate(n: usize, level: f64, mc_reps: usize, seed: u64) -> Result<Calibration> {
    if n < 20 {
        return Err(Error::invalid("detector calibration needs n >= 20"));
    }
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::invalid("calibration level must lie in (0, 1]"));
    }
    if mc_reps == 0 {
        return Err(Error::invalid("calibration needs at least one replicate"));
    }
    let mut maxima = crate::par::map_indexed(mc_reps, |r| {
        let mut rng = RngStream::new(seed, r as u64).rng();
        let mut u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        u.sort_by(f64::total_cmp);
        max_statistic(&u)
    });
    maxima.sort_by(f64::total_cmp);
    Ok(Calibration {
        n,
        level,
        kappa: empirical_quantile(&maxima, level),
        mc_reps,
        seed,
    })
}

/// Keeps, per direction, only intervals containing no other flagged
/// interval of that direction.
fn minimal(mut found: Vec<SlopeInterval>, n: usize) -> Vec<SlopeInterval> {
    // Shortest flagged interval per left end.
    let mut best: Vec<Option<SlopeInterval>> = alloc::vec![None; n];
    for s in found.drain(..) {
        match &best[s.lo] {
            Some(b) if b.hi <= s.hi => {}
            _ => best[s.lo] = Some(s),
        }
    }
    let mut out = Vec::new();
    let mut suffix_min_hi = usize::MAX;
    for j in (0..n).rev() {
        if let Some(s) = best[j] {
            if s.hi < suffix_min_hi {
                out.push(s);
            }
            suffix_min_hi = suffix_min_hi.min(s.hi);
        }
    }
    out.reverse();
    out
}

/// Flags rising and falling intervals of the sorted `values`, reduced to
/// minimal representatives and sorted by `lo` (falling first on ties).
pub fn detect_slopes(values: &[f64], cal: &Calibration) -> Result<Vec<SlopeInterval>> {
    if values.len() != cal.n {
        return Err(Error::DimensionMismatch {
            left: cal.n,
            right: values.len(),
        });
    }
    if values.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::invalid("slope detection needs ascending values"));
    }
    let mut rising = Vec::new();
    let mut falling = Vec::new();
    scan(values, |j, k, z, pen| {
        if z.abs() > pen + cal.kappa {
            let interval = SlopeInterval {
                lo: j,
                hi: k,
                direction: if z > 0.0 {
                    SlopeDirection::Rising
                } else {
                    SlopeDirection::Falling
                },
                standardized_stat: z,
            };
            if z > 0.0 {
                rising.push(interval);
            } else {
                falling.push(interval);
            }
        }
    });
    let mut out = minimal(falling, values.len());
    out.extend(minimal(rising, values.len()));
    out.sort_by_key(|s| (s.lo, s.direction == SlopeDirection::Rising, s.hi));
    Ok(out)
}

/// Left-end value of the first rising interval lying beyond the first
/// falling interval, if both exist.
pub fn find_cutoff(values: &[f64], slopes: &[SlopeInterval]) -> Option<f64> {
    find_cutoff_index(values, slopes).map(|i| values[i])
}

/// Order-statistic index of the value returned by [`find_cutoff`].
pub fn find_cutoff_index(values: &[f64], slopes: &[SlopeInterval]) -> Option<usize> {
    let fall = slopes
        .iter()
        .filter(|s| s.direction == SlopeDirection::Falling)
        .min_by_key(|s| s.lo)?;
    let floor = values[fall.lo];
    slopes
        .iter()
        .filter(|s| s.direction == SlopeDirection::Rising && values[s.lo] > floor)
        .min_by_key(|s| s.lo)
        .map(|s| s.lo)
}

/// Spreads every block of tied values evenly over its share of the gaps to
/// the neighbouring distinct values (half of each gap; none beyond the
/// extremes). Values closer than `rel_tol * max |value|` count as tied.
///
/// Lattice-valued samples (bootstrap means of rounded data, say) otherwise
/// look like point masses to the spacing statistic. The output is sorted and
/// order-preserving, and singletons are left unchanged.
pub fn untie(sorted: &[f64], rel_tol: f64) -> Vec<f64> {
    let n = sorted.len();
    let scale = sorted.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = rel_tol * scale;
    let mut blocks: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for i in 1..=n {
        if i == n || sorted[i] - sorted[i - 1] > tol {
            blocks.push((start, i));
            start = i;
        }
    }
    let mut out = sorted.to_vec();
    for (bi, &(a, b)) in blocks.iter().enumerate() {
        let count = b - a;
        if count < 2 {
            continue;
        }
        let v = sorted[a];
        let left = if bi > 0 { 0.5 * (v - sorted[blocks[bi - 1].1 - 1]) } else { 0.0 };
        let right = if bi + 1 < blocks.len() { 0.5 * (sorted[b] - v) } else { 0.0 };
        let width = left + right;
        if width <= 0.0 {
            continue;
        }
        for (r, slot) in out[a..b].iter_mut().enumerate() {
            *slot = v - left + width * (r as f64 + 0.5) / count as f64;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_t(values: &[f64], j: usize, k: usize) -> f64 {
        let w = values[k] - values[j];
        (j + 1..k).map(|i| 2.0 * (values[i] - values[j]) / w - 1.0).sum()
    }

    fn two_clusters() -> Vec<f64> {
        let mut rng = RngStream::new(3, 0).rng();
        let mut v: Vec<f64> = (0..1000).map(|_| 0.1 * rng.random::<f64>()).collect();
        v.extend((0..1000).map(|_| 0.9 + 0.1 * rng.random::<f64>()));
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn grid_lengths() {
        assert_eq!(&scale_grid(100)[..6], &[5, 8, 13, 21, 34, 54]);
        assert!(scale_grid(5).is_empty());
    }

    #[test]
    fn prefix_statistic_matches_direct_sum() {
        let v = two_clusters();
        let mut checked = 0;
        scan(&v, |j, k, z, _| {
            if (j * 7 + k) % 97 == 0 {
                let sd = (((k - j - 1) as f64) / 3.0).sqrt();
                assert!((z - brute_t(&v, j, k) / sd).abs() < 1e-8);
                checked += 1;
            }
        });
        assert!(checked > 100);
    }

    #[test]
    fn calibration_rejects_small_n() {
        assert!(dw_calibrate(19, 0.9, 1000, 1).is_err());
    }

    #[test]
    fn kappa_monotone_in_level() {
        let a = dw_calibrate(200, 0.9, 1000, 7).unwrap();
        let b = dw_calibrate(200, 0.99, 1000, 7).unwrap();
        let c = dw_calibrate(200, 1.0, 1000, 7).unwrap();
        assert!(a.kappa < b.kappa && b.kappa <= c.kappa);
    }

    #[test]
    fn arithmetic_progression_flags_nothing() {
        let v: Vec<f64> = (0..500).map(|i| i as f64).collect();
        let cal = dw_calibrate(500, 0.9, 1000, 1).unwrap();
        assert!(detect_slopes(&v, &cal).unwrap().is_empty());
    }

    #[test]
    fn two_clusters_give_cutoff_in_gap() {
        let v = two_clusters();
        let cal = dw_calibrate(v.len(), 0.9, 1000, 1).unwrap();
        let slopes = detect_slopes(&v, &cal).unwrap();
        assert!(slopes
            .iter()
            .any(|s| s.direction == SlopeDirection::Falling && v[s.lo] <= 0.1 && v[s.hi] >= 0.1 - 1e-3));
        assert!(slopes
            .iter()
            .any(|s| s.direction == SlopeDirection::Rising && v[s.hi] >= 0.9 && v[s.lo] <= 0.9 + 1e-3));
        // The empirical gap runs from the largest point of the first cluster
        // to the smallest of the second.
        let cut = find_cutoff(&v, &slopes).unwrap();
        assert!((v[999]..=v[1000]).contains(&cut), "{cut}");
        assert_eq!(v.iter().filter(|x| **x > cut).count(), 1000);
    }

    #[test]
    fn affine_equivariance() {
        let v = two_clusters();
        let w: Vec<f64> = v.iter().map(|x| 3.5 * x + 2.0).collect();
        let cal = dw_calibrate(v.len(), 0.9, 1000, 1).unwrap();
        let a: Vec<(usize, usize)> = detect_slopes(&v, &cal).unwrap().iter().map(|s| (s.lo, s.hi)).collect();
        let b: Vec<(usize, usize)> = detect_slopes(&w, &cal).unwrap().iter().map(|s| (s.lo, s.hi)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn cutoff_edge_cases() {
        let v: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(find_cutoff(&v, &[]), None);
        let fall = SlopeInterval {
            lo: 0,
            hi: 6,
            direction: SlopeDirection::Falling,
            standardized_stat: -9.0,
        };
        assert_eq!(find_cutoff(&v, &[fall]), None);
        let early_rise = SlopeInterval {
            lo: 0,
            hi: 5,
            direction: SlopeDirection::Rising,
            standardized_stat: 9.0,
        };
        let rise = SlopeInterval { lo: 4, ..early_rise };
        assert_eq!(find_cutoff(&v, &[fall, early_rise, rise]), Some(4.0));
    }

    #[test]
    fn minimal_intervals_are_inclusion_minimal() {
        let v = two_clusters();
        let cal = dw_calibrate(v.len(), 0.9, 1000, 1).unwrap();
        let slopes = detect_slopes(&v, &cal).unwrap();
        for a in &slopes {
            for b in &slopes {
                if a != b && a.direction == b.direction {
                    assert!(!(a.lo <= b.lo && b.hi <= a.hi));
                }
            }
        }
    }

    #[test]
    fn untie_spreads_blocks_within_their_cells() {
        let v = [0.0, 0.0, 1.0, 1.0 + 1e-15, 1.0, 3.0];
        let mut sorted = v.to_vec();
        sorted.sort_by(f64::total_cmp);
        let u = untie(&sorted, 1e-10);
        assert_eq!(u, [0.125, 0.375, 0.75, 1.25, 1.75, 3.0]);
        assert_eq!(untie(&[2.0; 4], 1e-10), [2.0; 4]);
        let w = [0.5, 1.0, 2.0];
        assert_eq!(untie(&w, 1e-10), w);
    }

    #[test]
    fn ties_are_skipped() {
        let mut v = alloc::vec![0.0; 30];
        v.extend((1..=30).map(f64::from));
        let mut seen_zero_width = false;
        scan(&v, |j, k, _, _| seen_zero_width |= v[j] == v[k]);
        assert!(!seen_zero_width);
    }
}
