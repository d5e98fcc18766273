//! n-out-of-n bootstrap of an m-estimator.
//!
//! Replicate `j` draws its resample and all optimizer starts from streams
//! nested under `(seed, j)`, so the set is identical for any worker count.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::estimators::{FitResult, MEstimator};
use crate::geometry::first_principal_axis;
use crate::sampling::{resample_counts, RngStream};
use crate::{Error, Result};

/// Task index of the stream used for the fit to the original sample.
pub const SAMPLE_FIT_TASK: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSet<D> {
    /// Descriptors of the retained replicates, in replicate order.
    pub descriptors: Vec<D>,
    /// Bootstrap losses `V*` of the retained replicates.
    pub losses: Vec<f64>,
    /// Distances to the sample descriptor.
    pub d: Vec<f64>,
    /// Magnitudes of the first principal-component scores of the tangent
    /// images, when the descriptor space has a tangent structure.
    pub ell: Option<Vec<f64>>,
    /// Replicate index of each retained entry.
    pub replicate: Vec<usize>,
    pub sample_fit: FitResult<D>,
    pub seed: u64,
    pub b: usize,
    pub dropped: usize,
}

impl<D> BootstrapSet<D> {
    pub fn retained(&self) -> usize {
        self.d.len()
    }
}

struct Replicate<D> {
    descriptor: D,
    loss: f64,
    distance: f64,
    tangent: Option<Vec<f64>>,
}

fn refit<P: MEstimator>(
    problem: &P,
    sample: &[P::Datum],
    weights: &[f64],
    sample_fit: &FitResult<P::Descriptor>,
    stream: RngStream,
    with_tangent: bool,
) -> Result<Replicate<P::Descriptor>> {
    let warm = core::slice::from_ref(&sample_fit.descriptor);
    let fit = problem.fit_weighted(sample, weights, warm, stream)?;
    let tangent = if with_tangent {
        Some(problem.log_map(&sample_fit.descriptor, &fit.descriptor)?)
    } else {
        None
    };
    Ok(Replicate {
        distance: problem.distance(&sample_fit.descriptor, &fit.descriptor),
        descriptor: fit.descriptor,
        loss: fit.loss,
        tangent,
    })
}

/// Fits `sample`, then refits `b` bootstrap resamples.
///
/// Each replicate uses the estimator's full multi-start protocol plus a warm
/// start at the sample descriptor. A replicate whose refit fails is retried
/// once on the same resample with fresh optimizer streams and dropped if it
/// fails again; more than 1% dropped replicates is an error.
pub fn run_bootstrap<P: MEstimator>(
    problem: &P,
    sample: &[P::Datum],
    b: usize,
    seed: u64,
    with_ell: bool,
) -> Result<BootstrapSet<P::Descriptor>> {
    if with_ell && !problem.has_tangent_structure() {
        return Err(Error::NoTangentStructure(problem.id()));
    }
    let sample_fit = problem.fit(sample, RngStream::new(seed, SAMPLE_FIT_TASK))?;
    bootstrap_around(problem, sample, sample_fit, b, seed, with_ell)
}

/// As [`run_bootstrap`] with the sample fit supplied by the caller.
pub fn bootstrap_around<P: MEstimator>(
    problem: &P,
    sample: &[P::Datum],
    sample_fit: FitResult<P::Descriptor>,
    b: usize,
    seed: u64,
    with_ell: bool,
) -> Result<BootstrapSet<P::Descriptor>> {
    if b == 0 {
        return Err(Error::invalid("bootstrap needs at least one replicate"));
    }
    let n = sample.len();
    let results = crate::par::map_indexed(b, |j| {
        let stream = RngStream::new(seed, j as u64);
        let weights = resample_counts(n, &mut stream.rng());
        refit(problem, sample, &weights, &sample_fit, stream.child(1), with_ell)
            .or_else(|_| refit(problem, sample, &weights, &sample_fit, stream.child(2), with_ell))
    });
    let dropped = results.iter().filter(|r| r.is_err()).count();
    if dropped * 100 > b {
        return Err(Error::TooManyDropped { dropped, total: b });
    }
    let mut set = BootstrapSet {
        descriptors: Vec::with_capacity(b - dropped),
        losses: Vec::with_capacity(b - dropped),
        d: Vec::with_capacity(b - dropped),
        ell: None,
        replicate: Vec::with_capacity(b - dropped),
        sample_fit,
        seed,
        b,
        dropped,
    };
    let mut tangents = Vec::new();
    for (j, r) in results.into_iter().enumerate() {
        if let Ok(r) = r {
            set.descriptors.push(r.descriptor);
            set.losses.push(r.loss);
            set.d.push(r.distance);
            set.replicate.push(j);
            if let Some(t) = r.tangent {
                tangents.push(t);
            }
        }
    }
    if with_ell {
        set.ell = Some(ell_scores(&tangents)?);
    }
    Ok(set)
}

/// `|<v_j, u>|` for the leading uncentered principal axis `u`. An all-zero
/// cloud projects to zero on any axis.
pub fn ell_scores(tangents: &[Vec<f64>]) -> Result<Vec<f64>> {
    if tangents.len() == 1 {
        let v = &tangents[0];
        return Ok(alloc::vec![crate::geometry::norm(v)]);
    }
    let refs: Vec<&[f64]> = tangents.iter().map(Vec::as_slice).collect();
    match first_principal_axis(&refs) {
        Ok(axis) => Ok(axis.scores.iter().map(|s| s.abs()).collect()),
        Err(Error::DegenerateCloud) => Ok(alloc::vec![0.0; tangents.len()]),
        Err(e) => Err(e),
    }
}

fn check_anchor_separation<P: MEstimator>(problem: &P, anchors: &[P::Descriptor], radius: f64) -> Result<()> {
    if anchors.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(radius > 0.0) {
        return Err(Error::invalid("local-fit radius must be positive"));
    }
    for (i, a) in anchors.iter().enumerate() {
        for b in &anchors[i + 1..] {
            if problem.distance(a, b) < 2.0 * radius {
                return Err(Error::invalid("anchors must be separated by at least twice the radius"));
            }
        }
    }
    Ok(())
}

/// Half the smallest pairwise anchor distance.
pub fn default_radius<P: MEstimator>(problem: &P, anchors: &[P::Descriptor]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in anchors.iter().enumerate() {
        for b in &anchors[i + 1..] {
            best = best.min(problem.distance(a, b));
        }
    }
    0.5 * best
}

/// Minimal weighted Fréchet function over the closed `radius`-ball around
/// each anchor.
pub fn loss_vector_for_weights<P: MEstimator>(
    problem: &P,
    sample: &[P::Datum],
    weights: &[f64],
    anchors: &[P::Descriptor],
    radius: f64,
) -> Result<Vec<f64>> {
    check_anchor_separation(problem, anchors, radius)?;
    anchors
        .iter()
        .map(|a| problem.local_fit(sample, weights, a, radius).map(|(_, loss)| loss))
        .collect()
}

/// `b x m` matrix of local bootstrap losses; row `j` uses the resample of
/// stream `(seed, j)`, the same resample [`run_bootstrap`] would draw.
pub fn bootstrap_loss_vector<P: MEstimator>(
    problem: &P,
    sample: &[P::Datum],
    anchors: &[P::Descriptor],
    radius: f64,
    b: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_anchor_separation(problem, anchors, radius)?;
    let n = sample.len();
    crate::par::map_indexed(b, |j| {
        let weights = resample_counts(n, &mut RngStream::new(seed, j as u64).rng());
        loss_vector_for_weights(problem, sample, &weights, anchors, radius)
    })
    .into_iter()
    .collect()
}
