//! Intrinsic mean on `S^p` by multi-start Riemannian fixed-point iteration.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_weights, FitResult, MEstimator, MinimaSet};
use crate::geometry::{norm, raw_distance, raw_exp, raw_log, SpherePoint};
use crate::sampling::RngStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereMean {
    pub starts: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub merge_radius: f64,
    /// Perturbed restarts allowed per start after hitting the cut locus.
    pub cut_locus_retries: usize,
}

impl Default for SphereMean {
    fn default() -> Self {
        Self {
            starts: 10,
            tol: 1e-11,
            max_iter: 1000,
            merge_radius: 1e-3,
            cut_locus_retries: 5,
        }
    }
}

struct Workspace {
    grad: Vec<f64>,
    tmp: Vec<f64>,
    next: Vec<f64>,
}

impl Workspace {
    fn new(dim: usize) -> Self {
        Self {
            grad: alloc::vec![0.0; dim],
            tmp: alloc::vec![0.0; dim],
            next: alloc::vec![0.0; dim],
        }
    }
}

fn frechet(at: &[f64], data: &[SpherePoint], weights: &[f64], total: f64) -> f64 {
    let mut s = 0.0;
    for (x, &w) in data.iter().zip(weights) {
        if w != 0.0 {
            let d = raw_distance(at, x.coords());
            s += w * d * d;
        }
    }
    s / total
}

/// Weighted mean of `log_at(x_i)`, the negative half-gradient of `F_n`.
fn mean_log(at: &[f64], data: &[SpherePoint], weights: &[f64], total: f64, ws: &mut Workspace) -> Result<()> {
    ws.grad.iter_mut().for_each(|g| *g = 0.0);
    for (x, &w) in data.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        raw_log(at, x.coords(), &mut ws.tmp)?;
        for (g, t) in ws.grad.iter_mut().zip(&ws.tmp) {
            *g += w * t;
        }
    }
    ws.grad.iter_mut().for_each(|g| *g /= total);
    Ok(())
}

impl SphereMean {
    /// Descent from `start`, optionally kept inside the closed ball of
    /// `radius` around `anchor`.
    fn descend(
        &self,
        start: &[f64],
        data: &[SpherePoint],
        weights: &[f64],
        total: f64,
        ball: Option<(&[f64], f64)>,
    ) -> Result<Vec<f64>> {
        let dim = start.len();
        let mut ws = Workspace::new(dim);
        let mut mu = start.to_vec();
        let mut f = frechet(&mu, data, weights, total);
        for _ in 0..self.max_iter {
            mean_log(&mu, data, weights, total, &mut ws)?;
            let gnorm = norm(&ws.grad);
            if gnorm < self.tol {
                break;
            }
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..40 {
                let v: Vec<f64> = ws.grad.iter().map(|g| step * g).collect();
                raw_exp(&mu, &v, &mut ws.next);
                if let Some((anchor, r)) = ball {
                    project_to_ball(anchor, r, &mut ws.next, &mut ws.tmp);
                }
                let fnext = frechet(&ws.next, data, weights, total);
                if fnext <= f + 1e-15 * f.abs().max(1.0) {
                    let moved_by = raw_distance(&mu, &ws.next);
                    mu.copy_from_slice(&ws.next);
                    f = fnext;
                    moved = moved_by >= self.tol;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        Ok(mu)
    }
}

fn project_to_ball(anchor: &[f64], radius: f64, x: &mut [f64], tmp: &mut [f64]) {
    let d = raw_distance(anchor, x);
    if d <= radius {
        return;
    }
    if raw_log(anchor, x, tmp).is_err() {
        return;
    }
    let n = norm(tmp);
    let scale = radius / n;
    let v: Vec<f64> = tmp.iter().map(|t| t * scale).collect();
    raw_exp(anchor, &v, x);
}

fn perturb<R: Rng + ?Sized>(x: &[f64], scale: f64, rng: &mut R) -> Vec<f64> {
    let mut y: Vec<f64> = x
        .iter()
        .map(|c| c + scale * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect();
    let n = norm(&y);
    y.iter_mut().for_each(|c| *c /= n);
    y
}

fn pick_weighted<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn check_dims(data: &[SpherePoint]) -> Result<usize> {
    let dim = data.first().ok_or(Error::EmptyInput)?.coords().len();
    for x in data {
        if x.coords().len() != dim {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: x.coords().len(),
            });
        }
    }
    Ok(dim)
}

impl MEstimator for SphereMean {
    type Datum = SpherePoint;
    type Descriptor = SpherePoint;

    fn id(&self) -> &'static str {
        "sphere-mean"
    }

    fn loss(&self, descriptor: &SpherePoint, datum: &SpherePoint) -> f64 {
        let d = raw_distance(descriptor.coords(), datum.coords());
        d * d
    }

    fn distance(&self, a: &SpherePoint, b: &SpherePoint) -> f64 {
        raw_distance(a.coords(), b.coords())
    }

    fn fit_weighted(
        &self,
        data: &[SpherePoint],
        weights: &[f64],
        warm: &[SpherePoint],
        stream: RngStream,
    ) -> Result<FitResult<SpherePoint>> {
        let total = check_weights(data.len(), weights)?;
        let dim = check_dims(data)?;
        let mut starts: Vec<Vec<f64>> = warm.iter().map(|w| w.coords().to_vec()).collect();
        let mut extrinsic = alloc::vec![0.0; dim];
        for (x, &w) in data.iter().zip(weights) {
            for (e, c) in extrinsic.iter_mut().zip(x.coords()) {
                *e += w * c;
            }
        }
        let en = norm(&extrinsic);
        let regular = self.starts.max(1);
        if en > 1e-12 * total {
            starts.push(extrinsic.iter().map(|e| e / en).collect());
        }
        // Start `s` draws from its own child stream so start sets are nested in `starts`.
        for s in starts.len().saturating_sub(warm.len())..regular {
            let mut rng = stream.child(s as u64).rng();
            starts.push(data[pick_weighted(weights, total, &mut rng)].coords().to_vec());
        }

        let dist = |a: &SpherePoint, b: &SpherePoint| raw_distance(a.coords(), b.coords());
        let mut set = MinimaSet::new(self.merge_radius);
        for (s, start) in starts.iter().enumerate() {
            let mut rng = stream.child(1_000_000 + s as u64).rng();
            let mut current = start.clone();
            for attempt in 0..=self.cut_locus_retries {
                match self.descend(&current, data, weights, total, None) {
                    Ok(mu) => {
                        let f = frechet(&mu, data, weights, total);
                        set.offer(SpherePoint::from_unit_unchecked(mu), f, dist);
                        break;
                    }
                    Err(Error::CutLocus) if attempt < self.cut_locus_retries => {
                        current = perturb(start, 1e-3 * (attempt + 1) as f64, &mut rng);
                    }
                    Err(Error::CutLocus) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        set.finish(
            starts.len(),
            |m| frechet(m.coords(), data, weights, total),
            dist,
        )
        .map_err(|_| Error::OptimizerFailed("every start hit the cut locus".into()))
    }

    fn has_tangent_structure(&self) -> bool {
        true
    }

    fn log_map(&self, base: &SpherePoint, other: &SpherePoint) -> Result<Vec<f64>> {
        let mut v = alloc::vec![0.0; base.coords().len()];
        raw_log(base.coords(), other.coords(), &mut v)?;
        Ok(v)
    }

    fn local_fit(
        &self,
        data: &[SpherePoint],
        weights: &[f64],
        anchor: &SpherePoint,
        radius: f64,
    ) -> Result<(SpherePoint, f64)> {
        let total = check_weights(data.len(), weights)?;
        check_dims(data)?;
        let a = anchor.coords();
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut rng = RngStream::new(0x5EED, 0).rng();
        let mut start = a.to_vec();
        for attempt in 0..=self.cut_locus_retries {
            match self.descend(&start, data, weights, total, Some((a, radius))) {
                Ok(mu) => {
                    let f = frechet(&mu, data, weights, total);
                    best = Some((mu, f));
                    break;
                }
                Err(Error::CutLocus) => {
                    start = perturb(a, 1e-3 * (attempt + 1) as f64, &mut rng);
                    let mut tmp = alloc::vec![0.0; a.len()];
                    project_to_ball(a, radius, &mut start, &mut tmp);
                }
                Err(e) => return Err(e),
            }
        }
        let (mu, f) = best.ok_or(Error::CutLocus)?;
        Ok((SpherePoint::from_unit_unchecked(mu), f))
    }
}

/// Global intrinsic mean of `points` with default settings.
pub fn frechet_mean_sphere(points: &[SpherePoint], stream: RngStream) -> Result<FitResult<SpherePoint>> {
    SphereMean::default().fit(points, stream)
}
