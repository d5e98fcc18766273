//! Gaussian mixture models fitted by EM, viewed as an m-estimator with loss
//! `rho(x, params) = -log sum_c w_c phi(x; m_c, S_c)`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::assignment::min_cost_assignment;
use super::{check_weights, FitResult, MEstimator, MinimaSet};
use crate::sampling::RngStream;
use crate::{Error, Result};

/// Mixture parameters. Covariances are row-major `q x q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<f64>>,
}

impl GmmParams {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn q(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Components reordered lexicographically by mean.
    fn canonical(mut self) -> Self {
        let mut idx: Vec<usize> = (0..self.k()).collect();
        idx.sort_by(|&a, &b| {
            self.means[a]
                .iter()
                .zip(&self.means[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(core::cmp::Ordering::Equal)
        });
        self.weights = idx.iter().map(|&i| self.weights[i]).collect();
        self.means = idx.iter().map(|&i| core::mem::take(&mut self.means[i])).collect();
        self.covariances = idx
            .iter()
            .map(|&i| core::mem::take(&mut self.covariances[i]))
            .collect();
        self
    }

    fn component_cost(&self, c: usize, other: &GmmParams, d: usize) -> f64 {
        let dw = self.weights[c] - other.weights[d];
        let dm: f64 = self.means[c]
            .iter()
            .zip(&other.means[d])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let ds: f64 = self.covariances[c]
            .iter()
            .zip(&other.covariances[d])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        dm + dw * dw + ds
    }

    /// `assign[c]` is the component of `other` matched to component `c`.
    fn matching(&self, other: &GmmParams) -> Result<(Vec<usize>, f64)> {
        if self.k() != other.k() || self.q() != other.q() {
            return Err(Error::DimensionMismatch {
                left: self.k() * 1000 + self.q(),
                right: other.k() * 1000 + other.q(),
            });
        }
        let cost: Vec<Vec<f64>> = (0..self.k())
            .map(|c| (0..other.k()).map(|d| self.component_cost(c, other, d)).collect())
            .collect();
        Ok(min_cost_assignment(&cost))
    }
}

/// Relabeling-invariant parameter distance: the minimum over component
/// matchings of summed squared differences of means, weights and covariances
/// (Frobenius).
pub fn gmm_distance(a: &GmmParams, b: &GmmParams) -> Result<f64> {
    Ok(a.matching(b)?.1)
}

/// In-place lower Cholesky factor of the row-major `a` into `l`; `false`
/// when `a` is not positive definite.
fn cholesky_into(a: &[f64], q: usize, l: &mut [f64]) -> bool {
    for i in 0..q {
        for j in 0..=i {
            let mut s = a[i * q + j];
            for k in 0..j {
                s -= l[i * q + k] * l[j * q + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return false;
                }
                l[i * q + i] = s.sqrt();
            } else {
                l[i * q + j] = s / l[j * q + j];
            }
        }
    }
    true
}

/// Reusable buffers for evaluating mixture densities and accumulating the
/// sufficient statistics of one EM pass.
struct Workspace {
    k: usize,
    q: usize,
    means: Vec<f64>,
    chols: Vec<f64>,
    log_norms: Vec<f64>,
    logs: Vec<f64>,
    scratch: Vec<f64>,
    chol: Vec<f64>,
    /// Per component, the log density on centered data as an affine
    /// function of the feature row of [`Prepared`].
    coefs: Vec<f64>,
    consts: Vec<f64>,
    nk: Vec<f64>,
    acc: Vec<f64>,
}

impl Workspace {
    fn new(k: usize, q: usize) -> Self {
        let z = |len: usize| alloc::vec![0.0; len];
        Self {
            k,
            q,
            means: z(k * q),
            chols: z(k * q * q),
            log_norms: z(k),
            logs: z(k),
            scratch: z(q),
            chol: z(q * q),
            coefs: z(k * feature_len(q)),
            consts: z(k),
            nk: z(k),
            acc: z(k * feature_len(q)),
        }
    }

    /// Factors every component of `p`; `None` if a covariance is singular.
    fn load(&mut self, p: &GmmParams) -> Option<()> {
        let (k, q) = (self.k, self.q);
        let log_2pi = (2.0 * PI).ln();
        for c in 0..k {
            let l = &mut self.chols[c * q * q..(c + 1) * q * q];
            if !cholesky_into(&p.covariances[c], q, l) {
                return None;
            }
            let log_det: f64 = (0..q).map(|i| l[i * q + i].ln()).sum::<f64>() * 2.0;
            self.log_norms[c] = p.weights[c].ln() - 0.5 * (q as f64 * log_2pi + log_det);
            self.means[c * q..(c + 1) * q].copy_from_slice(&p.means[c]);
        }
        Some(())
    }

    /// [`Workspace::load`] plus the expansion of each log density as
    /// `const + lin . x + sum_{a >= b} quad_ab x_a x_b`.
    fn load_quadratic(&mut self, p: &GmmParams) -> Option<()> {
        self.load(p)?;
        let (k, q) = (self.k, self.q);
        let dim = feature_len(q);
        let linv = &mut self.chol;
        for c in 0..k {
            let l = &self.chols[c * q * q..(c + 1) * q * q];
            // Columns of L^-1 by forward substitution.
            linv.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..q {
                for i in j..q {
                    let mut s = if i == j { 1.0 } else { 0.0 };
                    for t in j..i {
                        s -= l[i * q + t] * linv[t * q + j];
                    }
                    linv[i * q + j] = s / l[i * q + i];
                }
            }
            let mean = &self.means[c * q..(c + 1) * q];
            let coef = &mut self.coefs[c * dim..(c + 1) * dim];
            let mut mpm = 0.0;
            let mut t = q;
            for a in 0..q {
                let mut pm = 0.0;
                for b in 0..q {
                    let pab: f64 = (a.max(b)..q).map(|i| linv[i * q + a] * linv[i * q + b]).sum();
                    pm += pab * mean[b];
                    if b <= a {
                        coef[t] = if a == b { -0.5 * pab } else { -pab };
                        t += 1;
                    }
                }
                coef[a] = pm;
                mpm += pm * mean[a];
            }
            self.consts[c] = self.log_norms[c] - 0.5 * mpm;
        }
        Some(())
    }

    /// One E-step over all weighted feature rows, summing the weighted
    /// sufficient statistics into `nk` and `acc`. Returns the weighted
    /// negative log-likelihood, `None` if a point has zero density.
    #[inline(always)]
    fn accumulate(&mut self, features: &[f64], weights: &[f64], k: usize, dim: usize) -> Option<f64> {
        self.nk.iter_mut().for_each(|v| *v = 0.0);
        self.acc.iter_mut().for_each(|v| *v = 0.0);
        let mut nll = 0.0;
        for (f, &w) in features.chunks_exact(dim).zip(weights) {
            if w == 0.0 {
                continue;
            }
            let lse = self.quadratic_posteriors(f, k);
            if !lse.is_finite() {
                return None;
            }
            nll -= w * lse;
            for c in 0..k {
                let r = w * self.logs[c];
                self.nk[c] += r;
                for (a, v) in self.acc[c * dim..(c + 1) * dim].iter_mut().zip(f) {
                    *a += r * v;
                }
            }
        }
        Some(nll)
    }

    /// Posterior probabilities of the feature row `f` into `logs`; returns
    /// the log mixture density. Requires [`Workspace::load_quadratic`].
    #[inline(always)]
    fn quadratic_posteriors(&mut self, f: &[f64], k: usize) -> f64 {
        let dim = f.len();
        let mut m = f64::NEG_INFINITY;
        for c in 0..k {
            let coef = &self.coefs[c * dim..(c + 1) * dim];
            let v = self.consts[c] + coef.iter().zip(f).map(|(a, b)| a * b).sum::<f64>();
            self.logs[c] = v;
            m = m.max(v);
        }
        if !m.is_finite() {
            return m;
        }
        let logs = &mut self.logs[..k];
        let mut sum = 0.0;
        for l in logs.iter_mut() {
            // Terms below exp(-40) vanish against the leading 1.
            let t = *l - m;
            *l = if t == 0.0 {
                1.0
            } else if t < -40.0 {
                0.0
            } else {
                t.exp()
            };
            sum += *l;
        }
        let inv = 1.0 / sum;
        logs.iter_mut().for_each(|l| *l *= inv);
        m + sum.ln()
    }

    /// Fills `logs` with `log(w_c phi_c(x))` and returns their log-sum-exp.
    fn log_densities(&mut self, x: &[f64]) -> f64 {
        let q = self.q;
        for c in 0..self.k {
            let mean = &self.means[c * q..(c + 1) * q];
            let l = &self.chols[c * q * q..(c + 1) * q * q];
            let mut maha = 0.0;
            for i in 0..q {
                let row = &l[i * q..i * q + i + 1];
                let mut s = x[i] - mean[i];
                for (lk, yk) in row[..i].iter().zip(&self.scratch[..i]) {
                    s -= lk * yk;
                }
                let y = s / row[i];
                self.scratch[i] = y;
                maha += y * y;
            }
            self.logs[c] = self.log_norms[c] - 0.5 * maha;
        }
        log_sum_exp(&self.logs)
    }
}

fn feature_len(q: usize) -> usize {
    q + q * (q + 1) / 2
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub k: usize,
    pub starts: usize,
    /// Stop once the mean negative log-likelihood improves by less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Smallest admissible covariance eigenvalue.
    pub cov_floor: f64,
    pub merge_radius: f64,
    /// A run is stopped once it comes this close (in [`gmm_distance`]) to a
    /// minimum an earlier start already converged to, without having gone
    /// below that minimum's loss.
    pub join_radius: f64,
}

impl GmmFit {
    /// Defaults with `cov_floor = 1e-6 * trace(sample covariance) / q` and
    /// `join_radius = 1e3 * cov_floor`.
    pub fn for_data(points: &[Vec<f64>], k: usize) -> Result<Self> {
        let q = check_points(points)?;
        if k == 0 || k >= points.len() {
            return Err(Error::invalid("mixture needs 1 <= k < n"));
        }
        let w = alloc::vec![1.0; points.len()];
        let (_, cov) = weighted_moments(points, &w, q);
        let trace: f64 = (0..q).map(|i| cov[i * q + i]).sum();
        let floor = 1e-6 * trace / q as f64;
        Ok(Self {
            k,
            starts: 20,
            tol: 1e-8,
            max_iter: 1000,
            cov_floor: if floor > 0.0 { floor } else { 1e-12 },
            merge_radius: 1e-4,
            join_radius: if floor > 0.0 { 1e3 * floor } else { 1e-9 },
        })
    }

    fn floor_covariance(&self, cov: &mut [f64], q: usize, buf: &mut [f64]) {
        for i in 0..q {
            cov[i * q + i] -= self.cov_floor;
        }
        let fine = cholesky_into(cov, q, buf);
        for i in 0..q {
            cov[i * q + i] += self.cov_floor;
        }
        if fine {
            return;
        }
        let m = DMatrix::from_row_slice(q, q, cov);
        let m = (&m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(m);
        let vals = eig.eigenvalues.map(|v| v.max(self.cov_floor));
        let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        for i in 0..q {
            for j in 0..q {
                cov[i * q + j] = 0.5 * (rebuilt[(i, j)] + rebuilt[(j, i)]);
            }
        }
    }

    fn nll(&self, params: &GmmParams, data: &[Vec<f64>], weights: &[f64], total: f64) -> f64 {
        let mut ws = Workspace::new(params.k(), params.q());
        if ws.load(params).is_none() {
            return f64::INFINITY;
        }
        let mut s = 0.0;
        for (x, &w) in data.iter().zip(weights) {
            if w != 0.0 {
                s -= w * ws.log_densities(x);
            }
        }
        s / total
    }

    /// k-means++ seeding followed by one M-step from hard assignments.
    fn seed(&self, data: &[Vec<f64>], weights: &[f64], total: f64, stream: RngStream) -> GmmParams {
        let mut rng = stream.rng();
        let q = data[0].len();
        let pick = |probs: &[f64], rng: &mut crate::sampling::StreamRng| -> usize {
            let sum: f64 = probs.iter().sum();
            let mut u = rng.random::<f64>() * sum;
            for (i, p) in probs.iter().enumerate() {
                if u < *p {
                    return i;
                }
                u -= p;
            }
            probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
        };
        let sq = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(self.k);
        centers.push(data[pick(weights, &mut rng)].clone());
        let mut d2: Vec<f64> = data.iter().map(|x| sq(x, &centers[0])).collect();
        while centers.len() < self.k {
            let probs: Vec<f64> = d2.iter().zip(weights).map(|(d, w)| d * w).collect();
            let next = if probs.iter().sum::<f64>() > 0.0 {
                pick(&probs, &mut rng)
            } else {
                pick(weights, &mut rng)
            };
            let c = data[next].clone();
            for (d, x) in d2.iter_mut().zip(data) {
                *d = d.min(sq(x, &c));
            }
            centers.push(c);
        }
        let (_, total_cov) = weighted_moments(data, weights, q);
        let mut resp = alloc::vec![0.0; data.len() * self.k];
        for (i, x) in data.iter().enumerate() {
            let best = (0..self.k)
                .min_by(|&a, &b| sq(x, &centers[a]).total_cmp(&sq(x, &centers[b])))
                .unwrap_or(0);
            resp[i * self.k + best] = 1.0;
        }
        match self.m_step(data, weights, total, &resp) {
            Some(p) => p,
            None => GmmParams {
                weights: alloc::vec![1.0 / self.k as f64; self.k],
                means: centers,
                covariances: alloc::vec![total_cov; self.k],
            },
        }
    }

    fn m_step(&self, data: &[Vec<f64>], weights: &[f64], total: f64, resp: &[f64]) -> Option<GmmParams> {
        let (k, q) = (self.k, data[0].len());
        let mut nk = alloc::vec![0.0; k];
        let mut means = alloc::vec![alloc::vec![0.0; q]; k];
        for (i, x) in data.iter().enumerate() {
            let w = weights[i];
            if w == 0.0 {
                continue;
            }
            for c in 0..k {
                let r = w * resp[i * k + c];
                nk[c] += r;
                for (m, v) in means[c].iter_mut().zip(x) {
                    *m += r * v;
                }
            }
        }
        if nk.iter().any(|n| !(*n > 1e-10 * total)) {
            return None;
        }
        for c in 0..k {
            means[c].iter_mut().for_each(|m| *m /= nk[c]);
        }
        let mut covs = alloc::vec![alloc::vec![0.0; q * q]; k];
        let mut buf = alloc::vec![0.0; q * q];
        let mut diff = alloc::vec![0.0; q];
        for (i, x) in data.iter().enumerate() {
            let w = weights[i];
            if w == 0.0 {
                continue;
            }
            for c in 0..k {
                let r = w * resp[i * k + c];
                if r == 0.0 {
                    continue;
                }
                for (d, (a, b)) in diff.iter_mut().zip(x.iter().zip(&means[c])) {
                    *d = a - b;
                }
                let cov = &mut covs[c];
                for a in 0..q {
                    for b in 0..=a {
                        cov[a * q + b] += r * diff[a] * diff[b];
                    }
                }
            }
        }
        for c in 0..k {
            let cov = &mut covs[c];
            for a in 0..q {
                for b in 0..=a {
                    let v = cov[a * q + b] / nk[c];
                    cov[a * q + b] = v;
                    cov[b * q + a] = v;
                }
            }
            self.floor_covariance(cov, q, &mut buf);
        }
        Some(GmmParams {
            weights: nk.iter().map(|n| n / total).collect(),
            means,
            covariances: covs,
        })
    }

    fn fit_multistart(
        &self,
        data: &[Vec<f64>],
        weights: &[f64],
        warm: &[GmmParams],
        stream: RngStream,
    ) -> Result<FitResult<GmmParams>> {
        let total = check_weights(data.len(), weights)?;
        let q = check_points(data)?;
        let support = weights.iter().filter(|w| **w > 0.0).count();
        if self.k >= data.len() || self.k == 0 {
            return Err(Error::invalid("mixture needs 1 <= k < n"));
        }
        if support <= self.k {
            return Err(Error::invalid("fewer distinct weighted points than components"));
        }
        let prep = Prepared::new(data, q);
        let dist = |a: &GmmParams, b: &GmmParams| gmm_distance(a, b).unwrap_or(f64::INFINITY);
        let mut set = MinimaSet::new(self.merge_radius);
        let mut finished: Vec<(GmmParams, f64)> = Vec::new();
        let warm_inits = warm
            .iter()
            .filter(|w| w.k() == self.k && w.q() == q)
            .map(|w| prep.to_centered(w.clone()));
        let random = (0..self.starts.max(1))
            .map(|s| prep.to_centered(self.seed(data, weights, total, stream.child(s as u64))));
        let mut used = 0;
        for init in warm_inits.chain(random) {
            used += 1;
            let run = self.converge(init, &prep, weights, total, &finished);
            finished.extend(run);
        }
        for (p, loss) in finished {
            set.offer(prep.uncentered(p).canonical(), loss, dist);
        }
        set.finish(used, |p| self.nll(p, data, weights, total), dist)
            .map_err(|_| Error::OptimizerFailed("every EM start collapsed".into()))
    }

    /// One EM pass from `params`: returns the updated parameters and the loss
    /// at `params`, or `None` when a component collapses.
    fn em_step(&self, params: &GmmParams, data: &Prepared, weights: &[f64], total: f64, ws: &mut Workspace) -> Option<(GmmParams, f64)> {
        let (k, q) = (self.k, data.q);
        let dim = feature_len(q);
        ws.load_quadratic(params)?;
        // Literal sizes let the small inner loops unroll.
        let xs = &data.features;
        let nll = match (k, dim) {
            (2, 5) => ws.accumulate(xs, weights, 2, 5),
            (3, 5) => ws.accumulate(xs, weights, 3, 5),
            (2, 14) => ws.accumulate(xs, weights, 2, 14),
            (3, 14) => ws.accumulate(xs, weights, 3, 14),
            _ => ws.accumulate(xs, weights, k, dim),
        }?;
        if ws.nk.iter().any(|n| !(*n > 1e-10 * total)) {
            return None;
        }
        let mut next = params.clone();
        for c in 0..k {
            let nk = ws.nk[c];
            let mean = &mut next.means[c];
            for a in 0..q {
                mean[a] = ws.acc[c * dim + a] / nk;
            }
            let cov = &mut next.covariances[c];
            let mut t = 0;
            for a in 0..q {
                for b in 0..=a {
                    let v = ws.acc[c * dim + q + t] / nk - mean[a] * mean[b];
                    cov[a * q + b] = v;
                    cov[b * q + a] = v;
                    t += 1;
                }
            }
            self.floor_covariance(cov, q, &mut ws.chol);
            next.weights[c] = nk / total;
        }
        Some((next, nll / total))
    }

    /// EM from `init` for at most `max_iter` passes, accelerated by squared
    /// extrapolation: after two plain steps the iterate jumps along the
    /// fitted geometric path, and the jump is kept unless the next pass
    /// raises the loss by more than one observation's worth (`1 / n`). The
    /// step bound grows fourfold after each full-length jump and shrinks
    /// after each rejection. Stops once an improvement falls below `tol`.
    /// `None` when a component collapses or the run joins a minimum listed
    /// in `known`.
    fn em(
        &self,
        init: GmmParams,
        data: &Prepared,
        weights: &[f64],
        total: f64,
        max_iter: usize,
        known: &[(GmmParams, f64)],
    ) -> Option<GmmParams> {
        let mut ws = Workspace::new(self.k, data.q);
        let mut cur = init;
        let mut prev = f64::INFINITY;
        let mut passes = 0;
        let mut max_step = 1.0;
        let done = |prev: f64, nll: f64| (prev - nll).abs() < self.tol;
        while passes < max_iter {
            let (p1, nll0) = self.em_step(&cur, data, weights, total, &mut ws)?;
            passes += 1;
            if done(prev, nll0) || passes == max_iter {
                return Some(p1);
            }
            let (p2, nll1) = self.em_step(&p1, data, weights, total, &mut ws)?;
            passes += 1;
            if done(nll0, nll1) || passes == max_iter {
                return Some(p2);
            }
            prev = nll1;
            let Some((jump, step)) = self.extrapolate(&cur, &p1, &p2, max_step, &mut ws) else {
                cur = p2;
                continue;
            };
            match self.em_step(&jump, data, weights, total, &mut ws) {
                Some((p3, nll2)) if nll2 <= nll1 + 1.0 / total => {
                    passes += 1;
                    if done(nll1, nll2) {
                        return Some(p3);
                    }
                    prev = nll2;
                    cur = p3;
                    if step >= max_step {
                        max_step *= 4.0;
                    }
                    if self.joins_known(&cur, nll2, known) {
                        return None;
                    }
                }
                _ => {
                    passes += 1;
                    max_step = (max_step / 4.0).max(1.0);
                    cur = p2;
                }
            }
        }
        Some(cur)
    }

    /// Whether `p` lies so close to an already converged minimum that
    /// finishing its run would only find that minimum again.
    fn joins_known(&self, p: &GmmParams, nll: f64, known: &[(GmmParams, f64)]) -> bool {
        known
            .iter()
            .any(|(m, loss)| nll >= *loss && gmm_distance(p, m).is_ok_and(|d| d < self.join_radius))
    }

    /// `p0 - 2 a r + a^2 v` with `r = p1 - p0`, `v = p2 - 2 p1 + p0` and the
    /// step length `a = -|r| / |v|`, halved towards `-1` until the mixture is
    /// admissible. `None` when no extrapolation beyond `p2` is admissible.
    fn extrapolate(
        &self,
        p0: &GmmParams,
        p1: &GmmParams,
        p2: &GmmParams,
        max_step: f64,
        ws: &mut Workspace,
    ) -> Option<(GmmParams, f64)> {
        let flat = |p: &GmmParams| -> Vec<f64> {
            p.weights
                .iter()
                .chain(p.means.iter().flatten())
                .chain(p.covariances.iter().flatten())
                .copied()
                .collect()
        };
        let (a0, a1, a2) = (flat(p0), flat(p1), flat(p2));
        let (mut rr, mut vv) = (0.0, 0.0);
        for i in 0..a0.len() {
            let r = a1[i] - a0[i];
            let v = a2[i] - 2.0 * a1[i] + a0[i];
            rr += r * r;
            vv += v * v;
        }
        if !(vv > 0.0) {
            return None;
        }
        let mut alpha = -(rr / vv).sqrt().clamp(1.0, max_step);
        let q = p0.q();
        loop {
            let mut vals = a0.iter().zip(&a1).zip(&a2).map(|((x0, x1), x2)| {
                let (r, v) = (x1 - x0, x2 - 2.0 * x1 + x0);
                x0 - 2.0 * alpha * r + alpha * alpha * v
            });
            let mut out = p0.clone();
            out.weights.iter_mut().for_each(|w| *w = vals.next().unwrap_or(0.0));
            out.means.iter_mut().flatten().for_each(|m| *m = vals.next().unwrap_or(0.0));
            out.covariances.iter_mut().flatten().for_each(|s| *s = vals.next().unwrap_or(0.0));
            let sum: f64 = out.weights.iter().sum();
            let admissible = out.weights.iter().all(|w| *w > 0.0)
                && out.covariances.iter().all(|s| cholesky_into(s, q, &mut ws.chol));
            if admissible {
                out.weights.iter_mut().for_each(|w| *w /= sum);
                return Some((out, -alpha));
            }
            if alpha >= -1.0 {
                return None;
            }
            alpha = 0.5 * (alpha - 1.0);
            if alpha > -1.0 - 1e-3 {
                alpha = -1.0;
            }
        }
    }

    /// Runs `init` to convergence and evaluates its exact loss.
    fn converge(
        &self,
        init: GmmParams,
        data: &Prepared,
        weights: &[f64],
        total: f64,
        known: &[(GmmParams, f64)],
    ) -> Option<(GmmParams, f64)> {
        let params = self.em(init, data, weights, total, self.max_iter, known)?;
        let loss = self.nll_prepared(&params, data, weights, total);
        loss.is_finite().then_some((params, loss))
    }

    fn nll_prepared(&self, params: &GmmParams, data: &Prepared, weights: &[f64], total: f64) -> f64 {
        let mut ws = Workspace::new(params.k(), data.q);
        if ws.load(params).is_none() {
            return f64::INFINITY;
        }
        let mut s = 0.0;
        for (x, &w) in data.xs.chunks_exact(data.q).zip(weights) {
            if w != 0.0 {
                s -= w * ws.log_densities(x);
            }
        }
        s / total
    }
}

/// Points stored contiguously and shifted by their mean, which keeps the
/// one-pass covariance update free of cancellation.
struct Prepared {
    xs: Vec<f64>,
    /// Per point `x` followed by the products `x_a x_b`, `a >= b`.
    features: Vec<f64>,
    shift: Vec<f64>,
    q: usize,
}

impl Prepared {
    fn new(points: &[Vec<f64>], q: usize) -> Self {
        let n = points.len() as f64;
        let shift: Vec<f64> = (0..q).map(|a| points.iter().map(|p| p[a]).sum::<f64>() / n).collect();
        let xs = points
            .iter()
            .flat_map(|p| p.iter().zip(&shift).map(|(v, s)| v - s))
            .collect::<Vec<f64>>();
        let mut features = Vec::with_capacity(points.len() * feature_len(q));
        for x in xs.chunks_exact(q) {
            features.extend_from_slice(x);
            for a in 0..q {
                features.extend((0..=a).map(|b| x[a] * x[b]));
            }
        }
        Self { xs, features, shift, q }
    }

    fn to_centered(&self, mut p: GmmParams) -> GmmParams {
        for m in &mut p.means {
            m.iter_mut().zip(&self.shift).for_each(|(v, s)| *v -= s);
        }
        p
    }

    fn uncentered(&self, mut p: GmmParams) -> GmmParams {
        for m in &mut p.means {
            m.iter_mut().zip(&self.shift).for_each(|(v, s)| *v += s);
        }
        p
    }
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let q = points.first().ok_or(Error::EmptyInput)?.len();
    if q == 0 {
        return Err(Error::invalid("points need at least one coordinate"));
    }
    for p in points {
        if p.len() != q {
            return Err(Error::DimensionMismatch {
                left: q,
                right: p.len(),
            });
        }
    }
    Ok(q)
}

fn weighted_moments(points: &[Vec<f64>], weights: &[f64], q: usize) -> (Vec<f64>, Vec<f64>) {
    let total: f64 = weights.iter().sum();
    let mut mean = alloc::vec![0.0; q];
    for (x, &w) in points.iter().zip(weights) {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += w * v / total;
        }
    }
    let mut cov = alloc::vec![0.0; q * q];
    for (x, &w) in points.iter().zip(weights) {
        for a in 0..q {
            for b in 0..q {
                cov[a * q + b] += w * (x[a] - mean[a]) * (x[b] - mean[b]) / total;
            }
        }
    }
    (mean, cov)
}

impl MEstimator for GmmFit {
    type Datum = Vec<f64>;
    type Descriptor = GmmParams;

    fn id(&self) -> &'static str {
        "gmm"
    }

    fn loss(&self, params: &GmmParams, x: &Vec<f64>) -> f64 {
        let mut ws = Workspace::new(params.k(), params.q());
        match ws.load(params) {
            Some(()) => -ws.log_densities(x),
            None => f64::INFINITY,
        }
    }

    fn frechet(&self, params: &GmmParams, data: &[Vec<f64>], weights: &[f64]) -> f64 {
        let total: f64 = weights.iter().sum();
        self.nll(params, data, weights, total)
    }

    fn distance(&self, a: &GmmParams, b: &GmmParams) -> f64 {
        gmm_distance(a, b).unwrap_or(f64::INFINITY)
    }

    fn fit_weighted(
        &self,
        data: &[Vec<f64>],
        weights: &[f64],
        warm: &[GmmParams],
        stream: RngStream,
    ) -> Result<FitResult<GmmParams>> {
        self.fit_multistart(data, weights, warm, stream)
    }

    fn has_tangent_structure(&self) -> bool {
        true
    }

    /// Difference of the label-matched parameter vectors; off-diagonal
    /// covariance entries carry a `sqrt 2` factor so that the squared norm
    /// equals [`gmm_distance`].
    fn log_map(&self, base: &GmmParams, other: &GmmParams) -> Result<Vec<f64>> {
        let (assign, _) = base.matching(other)?;
        let q = base.q();
        let mut v = Vec::with_capacity(base.k() * (1 + q + q * (q + 1) / 2));
        for (c, &d) in assign.iter().enumerate() {
            v.push(other.weights[d] - base.weights[c]);
            v.extend(other.means[d].iter().zip(&base.means[c]).map(|(a, b)| a - b));
            for a in 0..q {
                for b in 0..=a {
                    let diff = other.covariances[d][a * q + b] - base.covariances[c][a * q + b];
                    v.push(if a == b { diff } else { core::f64::consts::SQRT_2 * diff });
                }
            }
        }
        Ok(v)
    }
}
