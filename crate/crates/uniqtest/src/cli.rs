//! Argument parsing and the subcommands of the `uniqtest` binary.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use uniqtest_core::asymptotics::{verify_loss_clt, verify_loss_covariance, verify_quantile_sum};
use uniqtest_core::estimators::{CircleMean, CurveFit, CurveParams, GmmFit, MEstimator, SphereMean};
use uniqtest_core::multiscale::{DEFAULT_CALIBRATION_SEED, DEFAULT_LEVEL, DEFAULT_MC_REPS};
use uniqtest_core::sampling::{sample_growth_curve, RngStream, SimDistribution, NULL_SD};
use uniqtest_core::uniqueness::{run_test_full, simulate_power, simulate_size, TestConfig, TestReport};

use crate::data::{self, AngleUnit, DataKind, Dataset};
use crate::output::{write_csv, write_dataset, write_json, Invocation};
use crate::{cache, CliError};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "UNIQTEST_THREADS";

#[derive(Debug, Parser)]
#[command(name = "uniqtest", version, about = "Bootstrap test for non-uniqueness of m-estimator descriptors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test a dataset for a non-unique population descriptor.
    Test(TestArgs),
    /// Size and power simulation studies on the circle and sphere nulls.
    Simulate(SimulateArgs),
    /// Monte-Carlo checks of the asymptotic results.
    Verify(VerifyArgs),
    /// Calibrate the slope detector for `n` summaries.
    Calibrate(CalibrateArgs),
    /// Write synthetic datasets.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EllMode {
    /// Compute the principal-component statistic when the estimator has a
    /// tangent space.
    Auto,
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct DetectorArgs {
    /// Detector confidence level.
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    pub level: f64,
    /// Monte-Carlo draws for the detector calibration.
    #[arg(long, default_value_t = DEFAULT_MC_REPS)]
    pub mc_reps: usize,
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_SEED)]
    pub calibration_seed: u64,
    /// Key-value file of earlier calibrations, read and extended.
    #[arg(long)]
    pub calibration_cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Dataset file (comma-separated, `#` comment lines).
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub kind: DataKind,
    /// Unit of circle data.
    #[arg(long, value_enum, default_value_t = AngleUnit::Rad)]
    pub unit: AngleUnit,
    /// Number of mixture components for euclidean data.
    #[arg(long)]
    pub gmm_k: Option<usize>,
    /// Restrict curve fits to `theta1 * theta2 >= -30`.
    #[arg(long)]
    pub constrain: bool,
    /// Bootstrap replicates.
    #[arg(short = 'B', default_value_t = 10_000)]
    pub b: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = EllMode::Auto)]
    pub ell: EllMode,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Report file (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMode {
    /// Sorted p-values under the null, one CSV per sample size.
    Size,
    /// Rejection rates over a grid of circle mixtures.
    Power,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub mode: SimMode,
    /// Sphere dimension `p` of the null (1 is the circle mixture).
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Sample sizes for the size study.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    pub n: Vec<usize>,
    /// Trials per cell.
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(short = 'B', default_value_t = 2000)]
    pub b: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Component standard deviation of the circle mixture, in radians.
    #[arg(long, default_value_t = NULL_SD)]
    pub sd: f64,
    /// Mixture offsets `a` for the power study.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-0.1,-0.05,0,0.05,0.1")]
    pub a_grid: Vec<f64>,
    /// Sample sizes for the power study.
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    pub n_grid: Vec<usize>,
    /// Also record the principal-component statistic (size study).
    #[arg(long)]
    pub ell: bool,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifyWhich {
    QuantileSum,
    LossClt,
    LossCov,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub which: VerifyWhich,
    /// Number of minimizers (quantile-sum).
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    /// Row-major covariance (quantile-sum); the identity when omitted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub sigma: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Normal draws (quantile-sum).
    #[arg(long, default_value_t = 1_000_000)]
    pub mc_reps: usize,
    /// Sample size (loss-clt).
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    /// Independent samples per sample size (loss-clt, loss-cov).
    #[arg(long, default_value_t = 2000)]
    pub reps: usize,
    /// Component standard deviation of the circle null, in radians.
    #[arg(long, default_value_t = PI / 50.0)]
    pub sd: f64,
    /// Sample sizes (loss-cov).
    #[arg(long, value_delimiter = ',', default_value = "100,400,1600")]
    pub n_grid: Vec<usize>,
    /// Weights of the loss contrast (loss-cov).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1,-1")]
    pub v: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report file (JSON); printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Number of summaries (usually `B`).
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    pub level: f64,
    #[arg(long, default_value_t = DEFAULT_MC_REPS)]
    pub mc_reps: usize,
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenerateWhat {
    /// Filament lengths following the four-parameter growth curve.
    Platelets,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(value_enum)]
    pub what: GenerateWhat,
    /// Curve parameters `theta1..theta4`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,20,5,0.01")]
    pub theta: Vec<f64>,
    /// Largest observation time; times run from 0 in steps of `--step`.
    #[arg(long, default_value_t = 400.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 2.0)]
    pub step: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Sizes the global rayon pool from [`THREADS_ENV`] when it is set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|t| *t > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}

/// Runs a parsed command line; `args` is recorded in every output file.
pub fn run(cli: Cli, args: Vec<String>) -> Result<(), CliError> {
    match cli.command {
        Command::Test(a) => cmd_test(&a, args),
        Command::Simulate(a) => cmd_simulate(&a, args),
        Command::Verify(a) => cmd_verify(&a, args),
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Generate(a) => cmd_generate(&a, args),
    }
}

fn test_config(b: usize, seed: u64, alpha: f64, det: &DetectorArgs) -> TestConfig {
    let mut cfg = TestConfig::new(b, seed, alpha);
    cfg.level = det.level;
    cfg.mc_reps = det.mc_reps;
    cfg.calibration_seed = det.calibration_seed;
    cfg
}

fn run_with<P: MEstimator>(problem: &P, sample: &[P::Datum], a: &TestArgs) -> Result<TestReport, CliError> {
    let with_ell = match a.ell {
        EllMode::Auto => problem.has_tangent_structure(),
        EllMode::On => true,
        EllMode::Off => false,
    };
    let cfg = test_config(a.b, a.seed, a.alpha, &a.detector).with_ell(with_ell);
    let cal = cache::get_or_calibrate(
        a.detector.calibration_cache.as_deref(),
        a.b,
        cfg.level,
        cfg.mc_reps,
        cfg.calibration_seed,
    )?;
    Ok(run_test_full(problem, sample, &cfg, Some(&cal))?.0)
}

fn fmt_p(p: Option<f64>) -> String {
    p.map_or_else(|| "NA".to_string(), |p| format!("{p}"))
}

pub fn summary_line(r: &TestReport) -> String {
    format!("p_d={} p_ell={} reject@{}={}", r.p_d, fmt_p(r.p_ell), r.alpha, r.reject_d)
}

fn cmd_test(a: &TestArgs, args: Vec<String>) -> Result<(), CliError> {
    let dataset = data::load(&a.data, a.kind, a.unit)?;
    if a.gmm_k.is_some() && a.kind != DataKind::Euclidean {
        return Err(CliError::Usage("--gmm-k applies to euclidean data only".into()));
    }
    if a.constrain && a.kind != DataKind::Curve {
        return Err(CliError::Usage("--constrain applies to curve data only".into()));
    }
    let report = match &dataset {
        Dataset::Circle(x) => run_with(&CircleMean::default(), x, a)?,
        Dataset::Sphere(x) => run_with(&SphereMean::default(), x, a)?,
        Dataset::Curve(x) => run_with(&CurveFit::for_data(x, a.constrain)?, x, a)?,
        Dataset::Euclidean(x) => {
            let k = a
                .gmm_k
                .ok_or_else(|| CliError::Usage("euclidean data needs --gmm-k".into()))?;
            run_with(&GmmFit::for_data(x, k)?, x, a)?
        }
    };
    if let Some(out) = &a.out {
        let inv = Invocation {
            args,
            seed: a.seed,
            b: Some(a.b),
        };
        write_json(out, &inv, &report)?;
    }
    println!("{}", summary_line(&report));
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn cmd_simulate(a: &SimulateArgs, args: Vec<String>) -> Result<(), CliError> {
    let cfg = test_config(a.b, a.seed, a.alpha, &a.detector).with_ell(a.ell);
    let inv = Invocation {
        args,
        seed: a.seed,
        b: Some(a.b),
    };
    match a.mode {
        SimMode::Size => {
            if a.n.is_empty() || a.n.contains(&0) {
                return Err(CliError::Usage("--n needs positive sample sizes".into()));
            }
            let dist = match a.dim {
                0 => return Err(CliError::Usage("--dim must be at least 1".into())),
                1 => SimDistribution::CircleNullMixture { a: 0.0, sd: a.sd },
                p => SimDistribution::SpherePoleNull { p },
            };
            dist.validate()?;
            let cal = calibration(&cfg, &a.detector)?;
            create_dir(&a.out)?;
            for (i, &n) in a.n.iter().enumerate() {
                let seed = RngStream::new(a.seed, i as u64).derived_seed();
                let res = simulate_size(&dist, n, a.trials, &cfg, seed, Some(&cal))?;
                let mut header = vec!["rank", "uniform", "p_d"];
                let mut ell_sorted: Vec<f64> = res.trials.iter().filter_map(|t| t.p_ell).collect();
                ell_sorted.sort_by(f64::total_cmp);
                if a.ell {
                    header.push("p_ell");
                }
                let t = res.sorted_p_d.len();
                let rows: Vec<Vec<String>> = res
                    .sorted_p_d
                    .iter()
                    .enumerate()
                    .map(|(r, p)| {
                        let mut row = vec![(r + 1).to_string(), ((r as f64 + 0.5) / t as f64).to_string(), p.to_string()];
                        if a.ell {
                            row.push(ell_sorted.get(r).map_or(String::new(), |v| v.to_string()));
                        }
                        row
                    })
                    .collect();
                let path = a.out.join(format!("size_p{}_n{}.csv", a.dim, n));
                write_csv(&path, &inv, &header, &rows)?;
                println!("n={n} rejection_rate={} file={}", res.rejection_rate_d, path.display());
            }
        }
        SimMode::Power => {
            if a.a_grid.is_empty() || a.n_grid.is_empty() || a.n_grid.contains(&0) || a.a_grid.iter().any(|x| !x.is_finite()) {
                return Err(CliError::Usage("power grids need finite offsets and positive sample sizes".into()));
            }
            if a.trials == 0 {
                return Err(CliError::Usage("--trials must be positive".into()));
            }
            let cal = calibration(&cfg, &a.detector)?;
            let cells = simulate_power(&a.a_grid, &a.n_grid, a.sd, a.trials, &cfg, a.seed, Some(&cal))?;
            create_dir(&a.out)?;
            let rows: Vec<Vec<String>> = cells
                .iter()
                .map(|c| {
                    let se = (c.rate * (1.0 - c.rate) / c.trials as f64).sqrt();
                    vec![c.a.to_string(), c.n.to_string(), c.trials.to_string(), c.rate.to_string(), se.to_string()]
                })
                .collect();
            let path = a.out.join("power.csv");
            write_csv(&path, &inv, &["a", "n", "trials", "rate", "se"], &rows)?;
            for c in &cells {
                println!("a={} n={} rate={}", c.a, c.n, c.rate);
            }
        }
    }
    Ok(())
}

fn calibration(cfg: &TestConfig, det: &DetectorArgs) -> Result<uniqtest_core::multiscale::Calibration, CliError> {
    cache::get_or_calibrate(det.calibration_cache.as_deref(), cfg.b, cfg.level, cfg.mc_reps, cfg.calibration_seed)
}

fn emit_report<T: Serialize>(out: Option<&Path>, inv: &Invocation, report: &T) -> Result<(), CliError> {
    match out {
        Some(path) => write_json(path, inv, report),
        None => {
            print!("{}", crate::output::to_json(inv, report)?);
            Ok(())
        }
    }
}

fn cmd_verify(a: &VerifyArgs, args: Vec<String>) -> Result<(), CliError> {
    let inv = Invocation {
        args,
        seed: a.seed,
        b: None,
    };
    let null = SimDistribution::CircleNullMixture { a: 0.0, sd: a.sd };
    let (pass, label) = match a.which {
        VerifyWhich::QuantileSum => {
            let sigma = match &a.sigma {
                Some(s) => s.clone(),
                None => (0..a.m * a.m).map(|i| if i % (a.m + 1) == 0 { 1.0 } else { 0.0 }).collect(),
            };
            let r = verify_quantile_sum(a.m, &sigma, a.alpha, a.mc_reps, a.seed)?;
            emit_report(a.out.as_deref(), &inv, &r)?;
            (r.pass, format!("quantile-sum m={} alpha={}: estimate={} se={}", r.m, r.alpha, r.estimate, r.se))
        }
        VerifyWhich::LossClt => {
            let r = verify_loss_clt(&null, a.n, a.reps, a.seed)?;
            emit_report(a.out.as_deref(), &inv, &r)?;
            (r.pass, format!("loss-clt n={}: variance_ratio={}", r.n, fmt_p(r.variance_ratio)))
        }
        VerifyWhich::LossCov => {
            let v: [f64; 2] = a
                .v
                .as_slice()
                .try_into()
                .map_err(|_| CliError::Usage("--v takes exactly two weights".into()))?;
            let r = verify_loss_covariance(&null, &a.n_grid, a.reps, v, a.seed)?;
            emit_report(a.out.as_deref(), &inv, &r)?;
            (r.pass, format!("loss-cov: slope={}", fmt_p(r.slope)))
        }
    };
    eprintln!("{label} pass={pass}");
    if pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed(label))
    }
}

fn cmd_calibrate(a: &CalibrateArgs) -> Result<(), CliError> {
    let cal = cache::get_or_calibrate(a.cache.as_deref(), a.n, a.level, a.mc_reps, a.seed)?;
    println!("{}", cache::format_line(&cal));
    Ok(())
}

fn cmd_generate(a: &GenerateArgs, args: Vec<String>) -> Result<(), CliError> {
    match a.what {
        GenerateWhat::Platelets => {
            let [t1, t2, t3, t4] = a.theta[..] else {
                return Err(CliError::Usage("--theta takes four values".into()));
            };
            if !(a.step > 0.0 && a.t_max >= 0.0 && a.noise_sd >= 0.0) {
                return Err(CliError::Usage("need --step > 0, --t-max >= 0 and --noise-sd >= 0".into()));
            }
            let steps = (a.t_max / a.step + 1e-9).floor() as usize;
            let times: Vec<f64> = (0..=steps).map(|i| i as f64 * a.step).collect();
            let theta = CurveParams::new(t1, t2, t3, t4);
            let pts = sample_growth_curve(&theta, &times, a.noise_sd, &mut RngStream::new(a.seed, 0).rng());
            let rows: Vec<Vec<String>> = pts.iter().map(|p| vec![p.t.to_string(), p.length.to_string()]).collect();
            let inv = Invocation {
                args,
                seed: a.seed,
                b: None,
            };
            write_dataset(&a.out, &inv, &["t", "length"], &rows)?;
        }
    }
    Ok(())
}
