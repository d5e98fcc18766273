//! Monte Carlo checks of the limit theory behind the test: the normal
//! quantile-sum bounds, the CLT for differences of local losses, and
//! consistency of the plug-in loss covariance.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Cholesky, DMatrix};
#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bootstrap::loss_vector_for_weights;
use crate::estimators::{CircleMean, MEstimator};
use crate::geometry::{angle_distance, Angle};
use crate::sampling::{sample_circle_mixture, RngStream, SimDistribution};
use crate::stats::{ks_normality, mean, variance};
use crate::{Error, Result};

pub use crate::stats::normal_quantile;

/// Draws per parallel block in [`verify_quantile_sum`].
const QS_BLOCK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileSumReport {
    pub m: usize,
    /// Row-major `m x m`.
    pub sigma: Vec<f64>,
    pub alpha: f64,
    pub mc_reps: usize,
    pub seed: u64,
    pub estimate: f64,
    pub se: f64,
    pub pass: bool,
}

/// Estimates `sum_i P(A_i)` with
/// `A_i = { (e_i - e_j)^T X <= sqrt((e_i - e_j)^T S (e_i - e_j)) q(alpha/2) for all j != i }`
/// for `X ~ N(0, S)`. Passes when the estimate is at most `alpha + 3 SE`,
/// and for `m = 2` when it is within `3 SE` of `alpha`.
pub fn verify_quantile_sum(m: usize, sigma: &[f64], alpha: f64, mc_reps: usize, seed: u64) -> Result<QuantileSumReport> {
    if m < 2 {
        return Err(Error::invalid("quantile sum needs m >= 2"));
    }
    if sigma.len() != m * m {
        return Err(Error::DimensionMismatch {
            left: m * m,
            right: sigma.len(),
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha must lie in (0, 1)"));
    }
    if mc_reps < 2 {
        return Err(Error::invalid("quantile sum needs at least 2 draws"));
    }
    let s = DMatrix::from_row_slice(m, m, sigma);
    if (0..m).any(|i| (0..i).any(|j| (s[(i, j)] - s[(j, i)]).abs() > 1e-12 * (1.0 + s[(i, j)].abs()))) {
        return Err(Error::NotPositiveDefinite);
    }
    let l = Cholesky::new(s.clone()).ok_or(Error::NotPositiveDefinite)?.l();
    let q = normal_quantile(alpha / 2.0)?;
    let mut bound = alloc::vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let w = s[(i, i)] + s[(j, j)] - 2.0 * s[(i, j)];
            bound[i * m + j] = w.max(0.0).sqrt() * q;
        }
    }
    let blocks = mc_reps.div_ceil(QS_BLOCK);
    let partial = crate::par::map_indexed(blocks, |blk| {
        let mut rng = RngStream::new(seed, blk as u64).rng();
        let count = QS_BLOCK.min(mc_reps - blk * QS_BLOCK);
        let mut z = alloc::vec![0.0; m];
        let mut x = alloc::vec![0.0; m];
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..count {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            for i in 0..m {
                x[i] = (0..=i).map(|k| l[(i, k)] * z[k]).sum();
            }
            let hits = (0..m)
                .filter(|&i| (0..m).all(|j| j == i || x[i] - x[j] <= bound[i * m + j]))
                .count() as f64;
            sum += hits;
            sumsq += hits * hits;
        }
        (sum, sumsq)
    });
    let (sum, sumsq) = partial.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nr = mc_reps as f64;
    let estimate = sum / nr;
    let var = ((sumsq - nr * estimate * estimate) / (nr - 1.0)).max(0.0);
    let se = (var / nr).sqrt();
    let mut pass = estimate <= alpha + 3.0 * se;
    if m == 2 {
        pass &= (estimate - alpha).abs() <= 3.0 * se;
    }
    Ok(QuantileSumReport {
        m,
        sigma: sigma.to_vec(),
        alpha,
        mc_reps,
        seed,
        estimate,
        se,
        pass,
    })
}

/// Expectation of `g` under the equal-weight wrapped-normal mixture with
/// centers `a` and `pi - a`, by composite Simpson quadrature over
/// `z in [-10, 10]` for each component.
pub fn circle_mixture_expectation(a: f64, sd: f64, g: impl Fn(f64) -> f64) -> f64 {
    let centers = [a, PI - a];
    if sd == 0.0 {
        return centers.iter().map(|c| 0.5 * g(*c)).sum();
    }
    const INTERVALS: usize = 20_000;
    let h = 20.0 / INTERVALS as f64;
    let norm = 1.0 / (2.0 * PI).sqrt();
    let mut total = 0.0;
    for c in centers {
        let mut s = 0.0;
        for i in 0..=INTERVALS {
            let z = -10.0 + i as f64 * h;
            let wgt = if i == 0 || i == INTERVALS {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s += wgt * norm * (-0.5 * z * z).exp() * g(c + sd * z);
        }
        total += 0.5 * s * h / 3.0;
    }
    total
}

fn null_anchors(dist: &SimDistribution) -> Result<(f64, f64)> {
    match *dist {
        SimDistribution::CircleNullMixture { a: 0.0, sd } => Ok((0.0, sd)),
        _ => Err(Error::invalid(
            "loss verification needs the symmetric circle null (a = 0), whose minimizers are pi/2 and 3pi/2",
        )),
    }
}

const ANCHORS: [f64; 2] = [FRAC_PI_2, 3.0 * FRAC_PI_2];

/// Population covariance matrix of `(d(X, pi/2)^2, d(X, 3pi/2)^2)` and the
/// population losses.
pub fn circle_null_loss_moments(sd: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let rho = |x: f64, i: usize| {
        let d = angle_distance(crate::sampling::wrap_angle(x), ANCHORS[i]);
        d * d
    };
    let v = [
        circle_mixture_expectation(0.0, sd, |x| rho(x, 0)),
        circle_mixture_expectation(0.0, sd, |x| rho(x, 1)),
    ];
    let mut cov = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            cov[i][j] = circle_mixture_expectation(0.0, sd, |x| (rho(x, i) - v[i]) * (rho(x, j) - v[j]));
        }
    }
    (v, cov)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerBreakdown {
    pub anchor: f64,
    pub population_loss: f64,
    /// Mean of `sqrt(n) (V_hat - V)`.
    pub mean_scaled_error: f64,
    pub empirical_variance: f64,
    pub target_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCltReport {
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    pub radius: f64,
    /// Variance of `sqrt(n) (V_hat^1 - V_hat^2)` over the replications.
    pub empirical_variance: f64,
    /// `Var[tau^1 - tau^2]` by quadrature.
    pub target_variance: f64,
    pub variance_ratio: Option<f64>,
    pub ks_statistic: Option<f64>,
    pub ks_p_value: Option<f64>,
    pub per_minimizer: Vec<MinimizerBreakdown>,
    /// Replications whose global minimum lies in neither ball.
    pub global_outside_balls: usize,
    pub pass: bool,
}

struct LocalLosses {
    local: [f64; 2],
    global: f64,
    minimizers: [f64; 2],
}

fn local_losses(data: &[Angle], est: &CircleMean) -> Result<LocalLosses> {
    let w = alloc::vec![1.0; data.len()];
    let anchors = [Angle::new(ANCHORS[0]), Angle::new(ANCHORS[1])];
    let local = loss_vector_for_weights(est, data, &w, &anchors, FRAC_PI_2)?;
    let (m1, _) = est.local_fit(data, &w, &anchors[0], FRAC_PI_2)?;
    let (m2, _) = est.local_fit(data, &w, &anchors[1], FRAC_PI_2)?;
    let global = est.fit(data, RngStream::new(0, 0))?.loss;
    Ok(LocalLosses {
        local: [local[0], local[1]],
        global,
        minimizers: [m1.value(), m2.value()],
    })
}

/// `M` samples of size `n` from the symmetric circle null; compares the
/// spread of `sqrt(n) (V_hat^1 - V_hat^2)` with `Var[tau^1 - tau^2]` and
/// tests its normality. Passes when the variance ratio lies in
/// `[0.85, 1.15]`, the KS p-value exceeds 0.01 and no global minimum falls
/// outside both balls.
pub fn verify_loss_clt(dist: &SimDistribution, n: usize, m: usize, seed: u64) -> Result<LossCltReport> {
    let (_, sd) = null_anchors(dist)?;
    if n == 0 || m < 2 {
        return Err(Error::invalid("loss CLT needs n >= 1 and M >= 2"));
    }
    let est = CircleMean::default();
    let reps = crate::par::map_indexed(m, |r| {
        let data = sample_circle_mixture(0.0, sd, n, &mut RngStream::new(seed, r as u64).rng());
        local_losses(&data, &est)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (v, cov) = circle_null_loss_moments(sd);
    let sn = (n as f64).sqrt();
    let diffs: Vec<f64> = reps.iter().map(|r| sn * (r.local[0] - r.local[1])).collect();
    let empirical_variance = variance(&diffs);
    let target_variance = (cov[0][0] + cov[1][1] - 2.0 * cov[0][1]).max(0.0);
    let global_outside_balls = reps
        .iter()
        .filter(|r| r.local[0].min(r.local[1]) > r.global + 1e-12)
        .count();
    let per_minimizer = (0..2)
        .map(|i| {
            let errs: Vec<f64> = reps.iter().map(|r| sn * (r.local[i] - v[i])).collect();
            MinimizerBreakdown {
                anchor: ANCHORS[i],
                population_loss: v[i],
                mean_scaled_error: mean(&errs),
                empirical_variance: variance(&errs),
                target_variance: cov[i][i],
            }
        })
        .collect();
    let degenerate = target_variance < 1e-24;
    let (ratio, ks) = if degenerate {
        (None, None)
    } else {
        (Some(empirical_variance / target_variance), Some(ks_normality(&diffs)))
    };
    let pass = global_outside_balls == 0
        && if degenerate {
            empirical_variance < 1e-20
        } else {
            let r = empirical_variance / target_variance;
            (0.85..=1.15).contains(&r) && ks.is_some_and(|k| k.p_value > 0.01)
        };
    Ok(LossCltReport {
        n,
        m,
        seed,
        radius: FRAC_PI_2,
        empirical_variance,
        target_variance,
        variance_ratio: ratio,
        ks_statistic: ks.map(|k| k.statistic),
        ks_p_value: ks.map(|k| k.p_value),
        per_minimizer,
        global_outside_balls,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceLevel {
    pub n: usize,
    /// Mean over replications of the plug-in `v^T Cov_n v`.
    pub mean_plug_in: f64,
    /// Mean absolute deviation of the plug-in from the target.
    pub mean_abs_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCovarianceReport {
    pub v: [f64; 2],
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    pub target: f64,
    pub levels: Vec<CovarianceLevel>,
    /// Least-squares slope of log deviation against log n.
    pub slope: Option<f64>,
    /// Relative error of the mean plug-in at the largest n.
    pub relative_error_at_largest_n: Option<f64>,
    pub pass: bool,
}

/// Plug-in `v^T Cov[tau*_n] v`: the empirical covariance of the losses at
/// the two sample local minimizers, taken over the sample points.
fn plug_in(data: &[Angle], minimizers: [f64; 2], v: [f64; 2]) -> f64 {
    let vals: Vec<f64> = data
        .iter()
        .map(|x| {
            let d1 = angle_distance(x.value(), minimizers[0]);
            let d2 = angle_distance(x.value(), minimizers[1]);
            v[0] * d1 * d1 + v[1] * d2 * d2
        })
        .collect();
    let m = mean(&vals);
    vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64
}

/// Plug-in covariance consistency across `n_grid`: passes when the log-log
/// slope of the mean absolute deviation lies in `[-0.65, -0.35]` and the
/// mean plug-in at the largest `n` is within 10% of the target.
pub fn verify_loss_covariance(
    dist: &SimDistribution,
    n_grid: &[usize],
    m: usize,
    v: [f64; 2],
    seed: u64,
) -> Result<LossCovarianceReport> {
    let (_, sd) = null_anchors(dist)?;
    if n_grid.len() < 2 || n_grid.iter().any(|n| *n < 2) || m < 1 {
        return Err(Error::invalid("covariance check needs two sample sizes >= 2 and M >= 1"));
    }
    let (_, cov) = circle_null_loss_moments(sd);
    let target = v[0] * v[0] * cov[0][0] + 2.0 * v[0] * v[1] * cov[0][1] + v[1] * v[1] * cov[1][1];
    let est = CircleMean::default();
    let mut levels = Vec::with_capacity(n_grid.len());
    for (gi, &n) in n_grid.iter().enumerate() {
        let base = RngStream::new(seed, gi as u64).derived_seed();
        let plug = crate::par::map_indexed(m, |r| {
            let data = sample_circle_mixture(0.0, sd, n, &mut RngStream::new(base, r as u64).rng());
            local_losses(&data, &est).map(|l| plug_in(&data, l.minimizers, v))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        levels.push(CovarianceLevel {
            n,
            mean_plug_in: mean(&plug),
            mean_abs_deviation: plug.iter().map(|p| (p - target).abs()).sum::<f64>() / m as f64,
        });
    }
    let degenerate = levels.iter().all(|l| l.mean_abs_deviation == 0.0);
    let slope = (!degenerate).then(|| {
        let xs: Vec<f64> = levels.iter().map(|l| (l.n as f64).ln()).collect();
        let ys: Vec<f64> = levels.iter().map(|l| l.mean_abs_deviation.ln()).collect();
        let (mx, my) = (mean(&xs), mean(&ys));
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        sxy / sxx
    });
    let last = levels.last().map_or(0.0, |l| l.mean_plug_in);
    let rel = (target > 0.0).then(|| (last - target).abs() / target);
    let pass = if degenerate {
        target == 0.0
    } else {
        slope.is_some_and(|s| (-0.65..=-0.35).contains(&s)) && rel.is_some_and(|r| r <= 0.1)
    };
    Ok(LossCovarianceReport {
        v,
        m,
        seed,
        target,
        levels,
        slope,
        relative_error_at_largest_n: rel,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_components_hit_alpha() {
        let r = verify_quantile_sum(2, &[1.0, 0.0, 0.0, 1.0], 0.05, 200_000, 1).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn non_spd_is_rejected() {
        assert!(verify_quantile_sum(2, &[1.0, 2.0, 2.0, 1.0], 0.05, 100, 1).is_err());
        assert!(verify_quantile_sum(2, &[1.0, 0.5, 0.0, 1.0], 0.05, 100, 1).is_err());
    }

    #[test]
    fn quadrature_integrates_moments() {
        let sd = 0.3;
        let m2 = circle_mixture_expectation(0.0, sd, |x| x * x);
        let exact = 0.5 * sd * sd + 0.5 * (PI * PI + sd * sd);
        assert!((m2 - exact).abs() < 1e-10);
    }

    #[test]
    fn point_masses_have_no_loss_spread() {
        let dist = SimDistribution::CircleNullMixture { a: 0.0, sd: 0.0 };
        let r = verify_loss_clt(&dist, 50, 20, 1).unwrap();
        assert_eq!(r.target_variance, 0.0);
        assert!(r.empirical_variance < 1e-20 && r.pass);
        for b in &r.per_minimizer {
            assert!((b.population_loss - PI * PI / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_direction_is_trivial() {
        let dist = SimDistribution::CircleNullMixture { a: 0.0, sd: PI / 50.0 };
        let r = verify_loss_covariance(&dist, &[20, 40], 5, [0.0, 0.0], 1).unwrap();
        assert_eq!(r.target, 0.0);
        assert!(r.levels.iter().all(|l| l.mean_plug_in == 0.0));
    }

    #[test]
    fn non_null_distribution_is_rejected() {
        let dist = SimDistribution::CircleNullMixture { a: 0.1, sd: 0.1 };
        assert!(verify_loss_clt(&dist, 10, 10, 1).is_err());
    }
}
