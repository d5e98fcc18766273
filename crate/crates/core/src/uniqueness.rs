//! The uniqueness test: fit, bootstrap, locate the secondary cluster of the
//! bootstrap summaries, and count the replicates beyond it.
//!
//! With `k` summaries strictly above the cutoff among `B` retained
//! replicates, `T = 2k / B` and `p = min(1, T)`. Small `p` is evidence for a
//! unique descriptor; the test rejects the non-uniqueness null when
//! `p < alpha`. Without a detected secondary cluster, `k = 0`.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{run_bootstrap, BootstrapSet};
use crate::estimators::{CircleMean, MEstimator, SphereMean};
use crate::multiscale::{
    detect_slopes, dw_calibrate, find_cutoff_index, untie, Calibration, DEFAULT_CALIBRATION_SEED, DEFAULT_LEVEL,
    DEFAULT_MC_REPS,
};
use crate::sampling::{sample_circle_mixture, sample_sphere_pole_null, RngStream, SimDistribution};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub alpha: f64,
    pub with_ell: bool,
    /// Detector confidence level.
    pub level: f64,
    pub mc_reps: usize,
    pub calibration_seed: u64,
}

impl TestConfig {
    pub fn new(b: usize, seed: u64, alpha: f64) -> Self {
        Self {
            b,
            seed,
            alpha,
            with_ell: false,
            level: DEFAULT_LEVEL,
            mc_reps: DEFAULT_MC_REPS,
            calibration_seed: DEFAULT_CALIBRATION_SEED,
        }
    }

    pub fn with_ell(mut self, on: bool) -> Self {
        self.with_ell = on;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.b < 100 {
            return Err(Error::invalid("the test needs B >= 100"));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn calibrate(&self, n: usize) -> Result<Calibration> {
        dw_calibrate(n, self.level, self.mc_reps, self.calibration_seed)
    }
}

/// Outcome for one family of summaries (`d` or `ell`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub cutoff: Option<f64>,
    pub k: usize,
    pub t: f64,
    pub p: f64,
    pub reject: bool,
    pub slopes: usize,
}

/// Relative tolerance under which summaries are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-10;

/// Cutoff, count and p-value for unsorted summaries. Tied summaries are
/// spread over their gaps (see [`untie`]) before slope detection; the
/// cutoff and the count use the original values.
pub fn evaluate(values: &[f64], cal: &Calibration, alpha: f64) -> Result<Statistic> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let spread = untie(&sorted, TIE_TOLERANCE);
    let slopes = detect_slopes(&spread, cal)?;
    let cutoff = find_cutoff_index(&spread, &slopes).map(|i| sorted[i]);
    let k = cutoff.map_or(0, |c| count_beyond(&sorted, c));
    Ok(statistic_from_count(k, sorted.len(), cutoff, slopes.len(), alpha))
}

/// Number of values strictly greater than `cutoff`.
pub fn count_beyond(values: &[f64], cutoff: f64) -> usize {
    values.iter().filter(|v| **v > cutoff).count()
}

pub fn statistic_from_count(k: usize, b: usize, cutoff: Option<f64>, slopes: usize, alpha: f64) -> Statistic {
    let t = 2.0 * k as f64 / b as f64;
    let p = t.min(1.0);
    Statistic {
        cutoff,
        k,
        t,
        p,
        reject: p < alpha,
        slopes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub estimator: String,
    pub n: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub alpha: f64,
    #[serde(rename = "T_d")]
    pub t_d: f64,
    pub p_d: f64,
    pub reject_d: bool,
    pub cutoff_d: Option<f64>,
    pub k_d: usize,
    #[serde(rename = "T_ell")]
    pub t_ell: Option<f64>,
    pub p_ell: Option<f64>,
    pub reject_ell: Option<bool>,
    pub cutoff_ell: Option<f64>,
    pub k_ell: Option<usize>,
    pub dropped: usize,
    /// Replicates entering the statistic (`B - dropped`).
    pub retained: usize,
    pub sample_loss: f64,
    pub sample_local_minima: usize,
    pub calibration: Calibration,
}

/// Runs the test with a detector calibrated at the retained replicate count.
pub fn run_test<P: MEstimator>(problem: &P, sample: &[P::Datum], cfg: &TestConfig) -> Result<TestReport> {
    Ok(run_test_full(problem, sample, cfg, None)?.0)
}

/// As [`run_test`], reusing `cal` when it matches the retained count, and
/// also returning the bootstrap set.
pub fn run_test_full<P: MEstimator>(
    problem: &P,
    sample: &[P::Datum],
    cfg: &TestConfig,
    cal: Option<&Calibration>,
) -> Result<(TestReport, BootstrapSet<P::Descriptor>)> {
    cfg.validate()?;
    let set = run_bootstrap(problem, sample, cfg.b, cfg.seed, cfg.with_ell)?;
    let report = report_for_set(problem.id(), sample.len(), &set, cfg, cal)?;
    Ok((report, set))
}

/// Statistic assembly for an existing bootstrap set.
pub fn report_for_set<D>(
    estimator: &str,
    n: usize,
    set: &BootstrapSet<D>,
    cfg: &TestConfig,
    cal: Option<&Calibration>,
) -> Result<TestReport> {
    let retained = set.retained();
    let cal = match cal {
        Some(c) if c.n == retained => *c,
        _ => cfg.calibrate(retained)?,
    };
    let d = evaluate(&set.d, &cal, cfg.alpha)?;
    let ell = set.ell.as_deref().map(|v| evaluate(v, &cal, cfg.alpha)).transpose()?;
    Ok(TestReport {
        estimator: estimator.into(),
        n,
        b: set.b,
        seed: set.seed,
        alpha: cfg.alpha,
        t_d: d.t,
        p_d: d.p,
        reject_d: d.reject,
        cutoff_d: d.cutoff,
        k_d: d.k,
        t_ell: ell.as_ref().map(|s| s.t),
        p_ell: ell.as_ref().map(|s| s.p),
        reject_ell: ell.as_ref().map(|s| s.reject),
        cutoff_ell: ell.as_ref().and_then(|s| s.cutoff),
        k_ell: ell.as_ref().map(|s| s.k),
        dropped: set.dropped,
        retained,
        sample_loss: set.sample_fit.loss,
        sample_local_minima: set.sample_fit.local_minima.len(),
        calibration: cal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub p_d: f64,
    pub p_ell: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeResult {
    pub n: usize,
    /// Trials in trial order.
    pub trials: Vec<TrialOutcome>,
    /// Ascending `p_d` values (pp-plot ordinates).
    pub sorted_p_d: Vec<f64>,
    pub rejection_rate_d: f64,
    pub rejection_rate_ell: Option<f64>,
}

/// Bootstrap seed of trial `t` of a simulation seeded with `seed`.
pub fn trial_seed(seed: u64, t: usize) -> u64 {
    RngStream::new(seed, t as u64).derived_seed()
}

fn run_trial(dist: &SimDistribution, n: usize, cfg: &TestConfig, cal: &Calibration, seed: u64, t: usize) -> Result<TrialOutcome> {
    let stream = RngStream::new(seed, t as u64);
    let mut rng = stream.rng();
    let mut trial_cfg = *cfg;
    trial_cfg.seed = trial_seed(seed, t);
    let report = match *dist {
        SimDistribution::CircleNullMixture { a, sd } => {
            let data = sample_circle_mixture(a, sd, n, &mut rng);
            run_test_full(&CircleMean::default(), &data, &trial_cfg, Some(cal))?.0
        }
        SimDistribution::SpherePoleNull { p } => {
            let data = sample_sphere_pole_null(p, n, &mut rng);
            run_test_full(&SphereMean::default(), &data, &trial_cfg, Some(cal))?.0
        }
    };
    Ok(TrialOutcome {
        trial: t,
        p_d: report.p_d,
        p_ell: report.p_ell,
    })
}

fn rate(ps: impl Iterator<Item = f64>, alpha: f64, total: usize) -> f64 {
    ps.filter(|p| *p < alpha).count() as f64 / total as f64
}

/// `trials` independent samples of size `n` from `dist`, each tested with
/// `cfg` (its seed is replaced per trial). Trial `t` samples from stream
/// `(seed, t)`. A calibration for `cfg.b` replicates is computed unless
/// `cal` supplies one.
pub fn simulate_size(
    dist: &SimDistribution,
    n: usize,
    trials: usize,
    cfg: &TestConfig,
    seed: u64,
    cal: Option<&Calibration>,
) -> Result<SizeResult> {
    dist.validate()?;
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::invalid("simulation needs at least one trial"));
    }
    let cal = match cal {
        Some(c) if c.n == cfg.b => *c,
        _ => cfg.calibrate(cfg.b)?,
    };
    let outcomes: Vec<TrialOutcome> = crate::par::map_indexed(trials, |t| run_trial(dist, n, cfg, &cal, seed, t))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut sorted: Vec<f64> = outcomes.iter().map(|o| o.p_d).collect();
    sorted.sort_by(f64::total_cmp);
    let rate_ell = cfg
        .with_ell
        .then(|| rate(outcomes.iter().filter_map(|o| o.p_ell), cfg.alpha, trials));
    Ok(SizeResult {
        n,
        rejection_rate_d: rate(sorted.iter().copied(), cfg.alpha, trials),
        rejection_rate_ell: rate_ell,
        sorted_p_d: sorted,
        trials: outcomes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCell {
    pub a: f64,
    pub n: usize,
    pub rate: f64,
    pub trials: usize,
}

/// Rejection rates of the circle family `0.5 N_w(a, sd) + 0.5 N_w(pi - a, sd)`
/// over the grid; cell `c` (row-major in `a`, then `n`) simulates with seed
/// `trial_seed(seed, c)`.
pub fn simulate_power(
    a_grid: &[f64],
    n_grid: &[usize],
    sd: f64,
    trials: usize,
    cfg: &TestConfig,
    seed: u64,
    cal: Option<&Calibration>,
) -> Result<Vec<PowerCell>> {
    if a_grid.is_empty() || n_grid.is_empty() {
        return Err(Error::invalid("power grid is empty"));
    }
    cfg.validate()?;
    let cal = match cal {
        Some(c) if c.n == cfg.b => *c,
        _ => cfg.calibrate(cfg.b)?,
    };
    let mut out = Vec::with_capacity(a_grid.len() * n_grid.len());
    for (i, &a) in a_grid.iter().enumerate() {
        for (jn, &n) in n_grid.iter().enumerate() {
            let cell = i * n_grid.len() + jn;
            let dist = SimDistribution::CircleNullMixture { a, sd };
            let res = simulate_size(&dist, n, trials, cfg, trial_seed(seed, cell), Some(&cal))?;
            out.push(PowerCell {
                a,
                n,
                rate: res.rejection_rate_d,
                trials,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::FitResult;
    use crate::geometry::Angle;
    use core::f64::consts::PI;

    fn synthetic_set(d: Vec<f64>) -> BootstrapSet<Angle> {
        let b = d.len();
        BootstrapSet {
            descriptors: alloc::vec![Angle::new(0.0); b],
            losses: alloc::vec![0.0; b],
            ell: None,
            replicate: (0..b).collect(),
            sample_fit: FitResult {
                descriptor: Angle::new(0.0),
                loss: 0.0,
                local_minima: alloc::vec![],
                starts_used: 1,
            },
            seed: 0,
            b,
            dropped: 0,
            d,
        }
    }

    #[test]
    fn identical_descriptors_reject() {
        let data = alloc::vec![Angle::new(2.0); 40];
        let cfg = TestConfig::new(200, 1, 0.05).with_ell(true);
        let r = run_test(&CircleMean::default(), &data, &cfg).unwrap();
        assert_eq!((r.k_d, r.p_d, r.reject_d), (0, 0.0, true));
        assert_eq!(r.p_ell, Some(0.0));
    }

    #[test]
    fn half_beyond_cutoff_gives_one() {
        assert_eq!(statistic_from_count(500, 1000, Some(0.5), 2, 0.05).p, 1.0);
        let s = statistic_from_count(50, 1000, Some(0.5), 2, 0.05);
        assert!((s.t - 0.1).abs() < 1e-15 && !s.reject);
    }

    fn two_cluster_distances() -> Vec<f64> {
        let mut d: Vec<f64> = (0..500).map(|i| 0.1 * i as f64 / 500.0).collect();
        d.extend((0..500).map(|i| 3.0 + 0.1 * i as f64 / 500.0));
        d
    }

    #[test]
    fn injected_cutoff_with_half_beyond() {
        let d = two_cluster_distances();
        let k = count_beyond(&d, 1.0);
        let s = statistic_from_count(k, d.len(), Some(1.0), 2, 0.05);
        assert_eq!((s.k, s.t, s.p, s.reject), (500, 1.0, 1.0, false));
    }

    #[test]
    fn detected_cutoff_separates_two_clusters() {
        let set = synthetic_set(two_cluster_distances());
        let cfg = TestConfig::new(1000, 0, 0.05);
        let r = report_for_set("circle", 10, &set, &cfg, None).unwrap();
        // The rising slope may start a point or two inside the first cluster.
        assert!((500..=503).contains(&r.k_d), "{}", r.k_d);
        assert_eq!((r.p_d, r.reject_d), (1.0, false));
    }

    #[test]
    fn removing_far_points_never_raises_p() {
        let mut d: Vec<f64> = (0..800).map(|i| 0.2 * i as f64 / 800.0).collect();
        d.extend((0..200).map(|i| 3.0 + 0.1 * i as f64 / 200.0));
        let cfg = TestConfig::new(1000, 0, 0.05);
        let full = report_for_set("x", 10, &synthetic_set(d.clone()), &cfg, None).unwrap();
        d.truncate(900);
        d.extend(alloc::vec![0.05; 100]);
        let fewer = report_for_set("x", 10, &synthetic_set(d), &cfg, None).unwrap();
        assert!(fewer.p_d <= full.p_d);
    }

    #[test]
    fn zero_alpha_never_rejects() {
        let dist = SimDistribution::CircleNullMixture { a: 0.1, sd: PI / 50.0 };
        let cfg = TestConfig::new(200, 0, 0.0);
        let res = simulate_size(&dist, 60, 10, &cfg, 4, None).unwrap();
        assert_eq!(res.rejection_rate_d, 0.0);
        assert_eq!(res.sorted_p_d.len(), 10);
    }

    #[test]
    fn small_b_is_rejected() {
        let data = alloc::vec![Angle::new(2.0); 40];
        assert!(run_test(&CircleMean::default(), &data, &TestConfig::new(99, 1, 0.05)).is_err());
    }

    #[test]
    fn report_is_reproducible() {
        let mut rng = RngStream::new(9, 0).rng();
        let data = sample_circle_mixture(0.0, PI / 50.0, 80, &mut rng);
        let cfg = TestConfig::new(500, 9, 0.05).with_ell(true);
        let a = run_test(&CircleMean::default(), &data, &cfg).unwrap();
        let b = run_test(&CircleMean::default(), &data, &cfg).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.p_d) && (0.0..=2.0).contains(&a.t_d));
    }
}
