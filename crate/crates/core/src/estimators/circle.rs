//! Intrinsic mean on the circle, found exactly.
//!
//! Cutting the circle at the antipode of a candidate mean lifts the data to
//! an interval, where the Fréchet function is a parabola. There are only as
//! many distinct liftings as distinct data angles, so enumerating them (with
//! prefix sums) visits every local minimum in `O(n log n)`.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use super::{check_weights, FitResult, MEstimator, MinimaSet};
use crate::geometry::{angle_distance, angle_log, Angle};
use crate::sampling::{wrap_angle, RngStream};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleMean {
    pub merge_radius: f64,
}

impl Default for CircleMean {
    fn default() -> Self {
        Self { merge_radius: 1e-3 }
    }
}

/// A lifting whose parabola vertex is consistent with its cut.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    mean: f64,
    loss: f64,
}

fn sorted_support(data: &[Angle], weights: &[f64]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = data
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(a, w)| (a.value(), *w))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts
}

fn candidates(pts: &[(f64, f64)]) -> Vec<Candidate> {
    let m = pts.len();
    let total_w: f64 = pts.iter().map(|p| p.1).sum();
    let s1: f64 = pts.iter().map(|p| p.1 * p.0).sum();
    let s2: f64 = pts.iter().map(|p| p.1 * p.0 * p.0).sum();
    let eps = 1e-12;
    let mut out = Vec::new();
    let (mut pw, mut py) = (0.0, 0.0);
    for c in 0..m {
        // Points before `c` are lifted by 2pi.
        let mean = (s1 + TAU * pw) / total_w;
        let lo = pts[c].0;
        let hi = if c == 0 { pts[m - 1].0 } else { pts[c - 1].0 + TAU };
        if mean - PI <= lo + eps && mean + PI >= hi - eps {
            let sumsq = s2 + 2.0 * TAU * py + TAU * TAU * pw;
            let loss = (sumsq / total_w - mean * mean).max(0.0);
            out.push(Candidate {
                mean: wrap_angle(mean),
                loss,
            });
        }
        pw += pts[c].1;
        py += pts[c].1 * pts[c].0;
    }
    out
}

fn weighted_frechet(at: f64, pts: &[(f64, f64)]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for &(y, w) in pts {
        let d = angle_distance(at, y);
        num += w * d * d;
        den += w;
    }
    num / den
}

impl MEstimator for CircleMean {
    type Datum = Angle;
    type Descriptor = Angle;

    fn id(&self) -> &'static str {
        "circle-mean"
    }

    fn loss(&self, descriptor: &Angle, datum: &Angle) -> f64 {
        let d = angle_distance(descriptor.value(), datum.value());
        d * d
    }

    fn distance(&self, a: &Angle, b: &Angle) -> f64 {
        angle_distance(a.value(), b.value())
    }

    fn fit_weighted(
        &self,
        data: &[Angle],
        weights: &[f64],
        _warm: &[Angle],
        _stream: RngStream,
    ) -> Result<FitResult<Angle>> {
        check_weights(data.len(), weights)?;
        let pts = sorted_support(data, weights);
        let cands = candidates(&pts);
        let dist = |a: &Angle, b: &Angle| angle_distance(a.value(), b.value());
        let mut set = MinimaSet::new(self.merge_radius);
        for c in &cands {
            set.offer(Angle::new(c.mean), c.loss, dist);
        }
        set.finish(pts.len(), |a| weighted_frechet(a.value(), &pts), dist)
    }

    fn has_tangent_structure(&self) -> bool {
        true
    }

    fn log_map(&self, base: &Angle, other: &Angle) -> Result<Vec<f64>> {
        Ok(alloc::vec![angle_log(base.value(), other.value())])
    }

    fn local_fit(
        &self,
        data: &[Angle],
        weights: &[f64],
        anchor: &Angle,
        radius: f64,
    ) -> Result<(Angle, f64)> {
        check_weights(data.len(), weights)?;
        let pts = sorted_support(data, weights);
        let mut options: Vec<f64> = candidates(&pts)
            .into_iter()
            .map(|c| c.mean)
            .filter(|m| angle_distance(*m, anchor.value()) <= radius)
            .collect();
        if radius < PI {
            // Within one parabola piece the restricted minimum can sit on the
            // ball's boundary; antipodal kinks are never minima.
            options.push(wrap_angle(anchor.value() - radius));
            options.push(wrap_angle(anchor.value() + radius));
        }
        options
            .into_iter()
            .map(|m| (m, weighted_frechet(m, &pts)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(m, l)| (Angle::new(m), l))
            .ok_or(crate::Error::EmptyInput)
    }
}

/// Global intrinsic mean of `angles` with all local minima.
pub fn frechet_mean_circle(angles: &[Angle]) -> Result<FitResult<Angle>> {
    CircleMean::default().fit(angles, RngStream::new(0, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use core::f64::consts::FRAC_PI_2;

    fn angles(xs: &[f64]) -> Vec<Angle> {
        xs.iter().copied().map(Angle::new).collect()
    }

    #[test]
    fn single_point() {
        let fit = frechet_mean_circle(&angles(&[0.0])).unwrap();
        assert_eq!(fit.descriptor.value(), 0.0);
        assert_eq!(fit.loss, 0.0);
    }

    #[test]
    fn symmetric_pair() {
        let fit = frechet_mean_circle(&angles(&[-0.3, 0.3])).unwrap();
        assert!(angle_distance(fit.descriptor.value(), 0.0) < 1e-12);
        assert!((fit.loss - 0.09).abs() < 1e-12);
    }

    #[test]
    fn antipodal_pair_has_two_minima() {
        let fit = frechet_mean_circle(&angles(&[0.0, PI])).unwrap();
        assert_eq!(fit.local_minima.len(), 2);
        let target = PI * PI / 4.0;
        for m in &fit.local_minima {
            assert!((m.loss - target).abs() < 1e-12);
            let v = m.descriptor.value();
            assert!(
                angle_distance(v, FRAC_PI_2) < 1e-12 || angle_distance(v, 3.0 * FRAC_PI_2) < 1e-12
            );
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(frechet_mean_circle(&[]).unwrap_err(), Error::EmptyInput);
    }

    #[test]
    fn brute_force_agreement() {
        let mut rng = RngStream::new(9, 0).rng();
        for _ in 0..50 {
            let data = crate::sampling::sample_circle_mixture(0.4, 0.8, 15, &mut rng);
            let fit = frechet_mean_circle(&data).unwrap();
            let w = alloc::vec![1.0; data.len()];
            let pts = sorted_support(&data, &w);
            let grid_min = (0..200_000)
                .map(|i| weighted_frechet(TAU * i as f64 / 200_000.0, &pts))
                .fold(f64::INFINITY, f64::min);
            assert!(fit.loss <= grid_min + 1e-12);
            assert!(grid_min - fit.loss < 1e-6);
        }
    }

    #[test]
    fn integer_weights_match_replicated_data() {
        let data = angles(&[0.1, 0.5, 2.0, 4.0]);
        let w = [2.0, 0.0, 1.0, 3.0];
        let replicated = angles(&[0.1, 0.1, 2.0, 4.0, 4.0, 4.0]);
        let a = CircleMean::default()
            .fit_weighted(&data, &w, &[], RngStream::new(0, 0))
            .unwrap();
        let b = frechet_mean_circle(&replicated).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-12);
        assert!(angle_distance(a.descriptor.value(), b.descriptor.value()) < 1e-12);
    }

    #[test]
    fn local_fit_on_half_circles() {
        let data = angles(&[0.0, PI]);
        let w = [1.0, 1.0];
        let est = CircleMean::default();
        let (d1, l1) = est.local_fit(&data, &w, &Angle::new(FRAC_PI_2), FRAC_PI_2).unwrap();
        let (d2, l2) = est.local_fit(&data, &w, &Angle::new(-FRAC_PI_2), FRAC_PI_2).unwrap();
        assert!(angle_distance(d1.value(), FRAC_PI_2) < 1e-12);
        assert!(angle_distance(d2.value(), 3.0 * FRAC_PI_2) < 1e-12);
        assert!((l1 - l2).abs() < 1e-12);
    }

    #[test]
    fn local_fit_clips_to_boundary() {
        // Global mean at 0; the ball around 1.0 of radius 0.5 is minimized at 0.5.
        let data = angles(&[-0.1, 0.1]);
        let (d, l) = CircleMean::default()
            .local_fit(&data, &[1.0, 1.0], &Angle::new(1.0), 0.5)
            .unwrap();
        assert!((d.value() - 0.5).abs() < 1e-12);
        assert!((l - (0.6f64.powi(2) + 0.4f64.powi(2)) / 2.0).abs() < 1e-12);
    }
}
