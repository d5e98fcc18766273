//! The m-estimation problems: a loss `rho(descriptor, datum)`, the weighted
//! sample Fréchet function, a multi-start global fit that also reports the
//! distinct local minima it met, and a descriptor metric.

use alloc::vec::Vec;
use core::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::sampling::RngStream;
use crate::{Error, Result};

mod assignment;
pub mod circle;
pub mod curve;
pub mod gmm;
pub mod nelder_mead;
pub mod sphere;

pub use assignment::min_cost_assignment;
pub use circle::{frechet_mean_circle, CircleMean};
pub use curve::{curve_distance, curve_model, CurveFit, CurveParams, CurvePoint, ParamBox};
pub use gmm::{gmm_distance, GmmFit, GmmParams};
pub use sphere::{frechet_mean_sphere, SphereMean};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMinimum<D> {
    pub descriptor: D,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<D> {
    pub descriptor: D,
    pub loss: f64,
    /// Distinct local minima, ascending by loss; the first is the global fit.
    pub local_minima: Vec<LocalMinimum<D>>,
    pub starts_used: usize,
}

pub trait MEstimator: Sync {
    type Datum: Sync + Send;
    type Descriptor: Clone + Debug + Send + Sync;

    fn id(&self) -> &'static str;

    fn loss(&self, descriptor: &Self::Descriptor, datum: &Self::Datum) -> f64;

    fn distance(&self, a: &Self::Descriptor, b: &Self::Descriptor) -> f64;

    /// Multi-start fit of the weighted Fréchet function. `weights` are
    /// nonnegative multiplicities (all ones for the sample itself), `warm`
    /// are extra starting points tried in addition to the regular starts.
    fn fit_weighted(
        &self,
        data: &[Self::Datum],
        weights: &[f64],
        warm: &[Self::Descriptor],
        stream: RngStream,
    ) -> Result<FitResult<Self::Descriptor>>;

    fn fit(&self, data: &[Self::Datum], stream: RngStream) -> Result<FitResult<Self::Descriptor>> {
        let w = alloc::vec![1.0; data.len()];
        self.fit_weighted(data, &w, &[], stream)
    }

    /// Weighted sample Fréchet function `sum w_i rho(d, x_i) / sum w_i`.
    fn frechet(&self, descriptor: &Self::Descriptor, data: &[Self::Datum], weights: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, &w) in data.iter().zip(weights) {
            if w != 0.0 {
                num += w * self.loss(descriptor, x);
                den += w;
            }
        }
        num / den
    }

    fn has_tangent_structure(&self) -> bool {
        false
    }

    /// Coordinates of `other` in a tangent space at `base`.
    fn log_map(&self, _base: &Self::Descriptor, _other: &Self::Descriptor) -> Result<Vec<f64>> {
        Err(Error::NoTangentStructure(self.id()))
    }

    /// Minimizer of the weighted Fréchet function over the closed ball of
    /// `radius` around `anchor`, with its loss.
    fn local_fit(
        &self,
        _data: &[Self::Datum],
        _weights: &[f64],
        _anchor: &Self::Descriptor,
        _radius: f64,
    ) -> Result<(Self::Descriptor, f64)> {
        Err(Error::NoLocalFit(self.id()))
    }
}

pub(crate) fn check_weights(n: usize, weights: &[f64]) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            left: n,
            right: weights.len(),
        });
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::invalid("weights must be nonnegative with positive total"));
    }
    Ok(total)
}

/// Collects candidate minima, merging those within `radius` of each other.
pub(crate) struct MinimaSet<D> {
    radius: f64,
    items: Vec<LocalMinimum<D>>,
}

impl<D: Clone> MinimaSet<D> {
    pub(crate) fn new(radius: f64) -> Self {
        Self {
            radius,
            items: Vec::new(),
        }
    }

    pub(crate) fn offer(&mut self, descriptor: D, loss: f64, dist: impl Fn(&D, &D) -> f64) {
        if !loss.is_finite() {
            return;
        }
        if let Some(existing) = self
            .items
            .iter_mut()
            .find(|m| dist(&m.descriptor, &descriptor) <= self.radius)
        {
            if loss < existing.loss {
                existing.descriptor = descriptor;
                existing.loss = loss;
            }
            return;
        }
        self.items.push(LocalMinimum { descriptor, loss });
    }

    /// Recomputes every loss with `exact`, re-merges and sorts.
    pub(crate) fn finish(
        self,
        starts_used: usize,
        exact: impl Fn(&D) -> f64,
        dist: impl Fn(&D, &D) -> f64,
    ) -> Result<FitResult<D>> {
        let radius = self.radius;
        let mut items: Vec<LocalMinimum<D>> = self
            .items
            .into_iter()
            .map(|m| LocalMinimum {
                loss: exact(&m.descriptor),
                descriptor: m.descriptor,
            })
            .collect();
        items.sort_by(|a, b| a.loss.total_cmp(&b.loss));
        let mut kept: Vec<LocalMinimum<D>> = Vec::with_capacity(items.len());
        for m in items {
            if kept.iter().all(|k| dist(&k.descriptor, &m.descriptor) > radius) {
                kept.push(m);
            }
        }
        let best = kept
            .first()
            .cloned()
            .ok_or_else(|| Error::OptimizerFailed("no start converged".into()))?;
        Ok(FitResult {
            descriptor: best.descriptor,
            loss: best.loss,
            local_minima: kept,
            starts_used,
        })
    }
}
