//! Least-squares fit of the saturating growth curve
//! `f(t) = max{0, (th3 + th4 t)(1 - exp(th1 - t/th2))}`.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nelder_mead::{minimize, NelderMeadConfig};
use super::{check_weights, FitResult, MEstimator, MinimaSet};
use crate::sampling::RngStream;
use crate::{Error, Result};

/// Lower bound enforced on `theta1 * theta2` when the constraint is on.
pub const ONSET_BOUND: f64 = -30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveParams {
    pub theta1: f64,
    /// Growth time scale; strictly positive.
    pub theta2: f64,
    pub theta3: f64,
    pub theta4: f64,
}

impl CurveParams {
    pub fn new(theta1: f64, theta2: f64, theta3: f64, theta4: f64) -> Self {
        Self {
            theta1,
            theta2,
            theta3,
            theta4,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.theta1, self.theta2, self.theta3, self.theta4]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self::new(x[0], x[1], x[2], x[3])
    }

    pub fn satisfies_onset_bound(&self) -> bool {
        self.theta1 * self.theta2 >= ONSET_BOUND
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: f64,
    pub length: f64,
}

pub fn curve_model(t: f64, theta: &CurveParams) -> f64 {
    let growth = 1.0 - (theta.theta1 - t / theta.theta2).exp();
    ((theta.theta3 + theta.theta4 * t) * growth).max(0.0)
}

/// `sum_i |f(t_i, a) - f(t_i, b)|^2` over `grid`.
pub fn curve_distance(a: &CurveParams, b: &CurveParams, grid: &[f64]) -> f64 {
    grid.iter()
        .map(|&t| {
            let d = curve_model(t, a) - curve_model(t, b);
            d * d
        })
        .sum()
}

/// Box from which multi-start points are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
}

impl ParamBox {
    /// `th1 in [-10, 10]`, `th2 in [1, T]`, `th3 in [-L, 2L]`, `th4 in [-L/T, L/T]`
    /// with `T = max t` and `L = max length`.
    pub fn for_data(data: &[CurvePoint]) -> Self {
        let t_max = data.iter().map(|p| p.t).fold(0.0, f64::max);
        let t_max = if t_max > 1.0 { t_max } else { 1.0 + 1e-9 };
        let l_max = data.iter().map(|p| p.length.abs()).fold(0.0, f64::max);
        let l_max = if l_max > 0.0 { l_max } else { 1.0 };
        Self {
            lo: [-10.0, 1.0, -l_max, -l_max / t_max],
            hi: [10.0, t_max, 2.0 * l_max, l_max / t_max],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveFit {
    /// Time grid of the descriptor distance (the sample's time points).
    pub grid: Vec<f64>,
    pub starts: usize,
    pub constrain_onset: bool,
    pub bounds: ParamBox,
    pub merge_radius: f64,
    pub optimizer: NelderMeadConfig,
}

/// Starts are drawn as consecutive Latin-hypercube blocks of this size, each
/// from its own stream, so a larger start count extends a smaller one.
const LHS_BLOCK: usize = 10;

impl CurveFit {
    pub fn for_data(data: &[CurvePoint], constrain_onset: bool) -> Result<Self> {
        if data.len() < 5 {
            return Err(Error::invalid("curve fit needs at least 5 points"));
        }
        Ok(Self {
            grid: data.iter().map(|p| p.t).collect(),
            starts: 30,
            constrain_onset,
            bounds: ParamBox::for_data(data),
            merge_radius: 1e-4,
            optimizer: NelderMeadConfig::default(),
        })
    }

    fn feasible(&self, x: &[f64]) -> bool {
        x[1] > 0.0 && x.iter().all(|v| v.is_finite()) && (!self.constrain_onset || x[0] * x[1] >= ONSET_BOUND)
    }

    fn objective(&self, x: &[f64], data: &[CurvePoint], weights: &[f64], total: f64) -> f64 {
        if !self.feasible(x) {
            return f64::INFINITY;
        }
        let theta = CurveParams::from_slice(x);
        let mut s = 0.0;
        for (p, &w) in data.iter().zip(weights) {
            if w != 0.0 {
                let r = p.length - curve_model(p.t, &theta);
                s += w * r * r;
            }
        }
        s / total
    }

    fn start_points(&self, stream: RngStream) -> Vec<[f64; 4]> {
        let mut out = Vec::with_capacity(self.starts);
        let mut block = 0u64;
        while out.len() < self.starts {
            let mut rng = stream.child(block).rng();
            let mut cols: [Vec<usize>; 4] = core::array::from_fn(|_| (0..LHS_BLOCK).collect());
            for c in cols.iter_mut() {
                c.shuffle(&mut rng);
            }
            for s in 0..LHS_BLOCK {
                let mut x = [0.0; 4];
                for d in 0..4 {
                    let u = (cols[d][s] as f64 + rng.random::<f64>()) / LHS_BLOCK as f64;
                    x[d] = self.bounds.lo[d] + u * (self.bounds.hi[d] - self.bounds.lo[d]);
                }
                if self.constrain_onset && x[0] * x[1] < ONSET_BOUND {
                    x[0] = ONSET_BOUND / x[1];
                }
                out.push(x);
                if out.len() == self.starts {
                    break;
                }
            }
            block += 1;
        }
        out
    }
}

impl MEstimator for CurveFit {
    type Datum = CurvePoint;
    type Descriptor = CurveParams;

    fn id(&self) -> &'static str {
        "curve-fit"
    }

    fn loss(&self, theta: &CurveParams, x: &CurvePoint) -> f64 {
        let r = x.length - curve_model(x.t, theta);
        r * r
    }

    fn distance(&self, a: &CurveParams, b: &CurveParams) -> f64 {
        curve_distance(a, b, &self.grid)
    }

    fn fit_weighted(
        &self,
        data: &[CurvePoint],
        weights: &[f64],
        warm: &[CurveParams],
        stream: RngStream,
    ) -> Result<FitResult<CurveParams>> {
        let total = check_weights(data.len(), weights)?;
        if data.len() < 5 {
            return Err(Error::invalid("curve fit needs at least 5 points"));
        }
        let mut starts: Vec<[f64; 4]> = warm
            .iter()
            .map(|w| w.to_array())
            .filter(|x| self.feasible(x))
            .collect();
        starts.extend(self.start_points(stream));
        let scale: Vec<f64> = (0..4)
            .map(|d| 0.1 * (self.bounds.hi[d] - self.bounds.lo[d]))
            .collect();
        let dist = |a: &CurveParams, b: &CurveParams| curve_distance(a, b, &self.grid);
        let mut set = MinimaSet::new(self.merge_radius);
        for x0 in &starts {
            let r = minimize(|x| self.objective(x, data, weights, total), x0, &scale, &self.optimizer);
            if r.value.is_finite() {
                set.offer(CurveParams::from_slice(&r.x), r.value, dist);
            }
        }
        set.finish(
            starts.len(),
            |t| self.objective(&t.to_array(), data, weights, total),
            dist,
        )
        .map_err(|_| Error::OptimizerFailed("every curve-fit start diverged".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(theta: &CurveParams, ts: impl Iterator<Item = f64>) -> Vec<CurvePoint> {
        ts.map(|t| CurvePoint {
            t,
            length: curve_model(t, theta),
        })
        .collect()
    }

    #[test]
    fn model_cases() {
        let flat = CurveParams::new(1.0, 5.0, 0.0, 0.0);
        assert_eq!(curve_model(3.0, &flat), 0.0);
        let sat = CurveParams::new(0.0, 2.0, 7.0, 0.0);
        assert!((curve_model(1e4, &sat) - 7.0).abs() < 1e-12);
        let th = CurveParams::new(2.0, 3.0, 4.0, 0.5);
        assert_eq!(curve_model(th.theta1 * th.theta2, &th), 0.0);
    }

    #[test]
    fn distance_cases() {
        let grid: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let a = CurveParams::new(-50.0, 1.0, 2.0, 0.0);
        assert_eq!(curve_distance(&a, &a, &grid), 0.0);
        // exp(-50 - t) underflows to ~0, so both curves are constant in t.
        let b = CurveParams::new(-50.0, 1.0, 2.5, 0.0);
        assert!((curve_distance(&a, &b, &grid) - 10.0 * 0.25).abs() < 1e-12);
        assert_eq!(curve_distance(&a, &b, &grid), curve_distance(&b, &a, &grid));
    }

    #[test]
    fn recovers_noiseless_truth() {
        let truth = CurveParams::new(0.0, 20.0, 5.0, 0.01);
        let data = synthetic(&truth, (0..=200).map(|i| 2.0 * i as f64));
        let est = CurveFit::for_data(&data, false).unwrap();
        let fit = est.fit(&data, RngStream::new(1, 0)).unwrap();
        assert!(fit.loss < 1e-8, "{}", fit.loss);
        assert!(curve_distance(&fit.descriptor, &truth, &est.grid) < 1e-6);
    }

    #[test]
    fn all_zero_lengths_fit_exactly() {
        let data: Vec<CurvePoint> = (0..20)
            .map(|i| CurvePoint {
                t: i as f64,
                length: 0.0,
            })
            .collect();
        let est = CurveFit::for_data(&data, false).unwrap();
        let fit = est.fit(&data, RngStream::new(2, 0)).unwrap();
        assert!(fit.loss < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let data = alloc::vec![CurvePoint { t: 0.0, length: 0.0 }; 4];
        assert!(CurveFit::for_data(&data, false).is_err());
    }

    #[test]
    fn onset_constraint_respected() {
        let truth = CurveParams::new(-5.0, 10.0, 3.0, 0.0);
        let data = synthetic(&truth, (0..60).map(|i| i as f64));
        let est = CurveFit::for_data(&data, true).unwrap();
        let fit = est.fit(&data, RngStream::new(3, 0)).unwrap();
        for m in &fit.local_minima {
            assert!(m.descriptor.satisfies_onset_bound());
        }
    }
}
