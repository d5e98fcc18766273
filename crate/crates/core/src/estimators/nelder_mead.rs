//! Derivative-free Nelder–Mead simplex minimization with restarts.

use alloc::vec::Vec;


#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadConfig {
    pub max_evals: usize,
    /// Relative spread of simplex values at which a run stops.
    pub ftol: f64,
    /// Restarts from the best vertex after a run stalls.
    pub restarts: usize,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            max_evals: 4000,
            ftol: 1e-15,
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Minimizes `f` from `x0`; `scale` sets the initial simplex edge per
/// coordinate. `f` may return `+inf` to reject infeasible points.
pub fn minimize<F>(f: F, x0: &[f64], scale: &[f64], cfg: &NelderMeadConfig) -> NelderMeadResult
where
    F: Fn(&[f64]) -> f64,
{
    let mut best = x0.to_vec();
    let mut best_f = f(&best);
    let mut evals = 1;
    let mut edge: Vec<f64> = scale.to_vec();
    for round in 0..=cfg.restarts {
        let (x, fx, used) = run(&f, &best, &edge, cfg);
        evals += used;
        let improved = fx < best_f;
        let gain = best_f - fx;
        if improved {
            best = x;
            best_f = fx;
        }
        if round > 0 && !(gain > cfg.ftol * (best_f.abs() + 1e-300)) {
            break;
        }
        edge.iter_mut().for_each(|e| *e *= 0.1);
    }
    NelderMeadResult {
        x: best,
        value: best_f,
        evals,
    }
}

fn run<F>(f: &F, x0: &[f64], edge: &[f64], cfg: &NelderMeadConfig) -> (Vec<f64>, f64, usize)
where
    F: Fn(&[f64]) -> f64,
{
    let d = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..d {
        let mut x = x0.to_vec();
        let h = if edge[i] != 0.0 { edge[i] } else { 1e-3 };
        x[i] += h;
        let mut fx = f(&x);
        if !fx.is_finite() {
            x[i] = x0[i] - h;
            fx = f(&x);
        }
        simplex.push((x, fx));
    }
    let mut evals = d + 1;
    let mut centroid = alloc::vec![0.0; d];
    let point = |c: &[f64], worst: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(worst).map(|(c, w)| c + t * (w - c)).collect()
    };
    while evals < cfg.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (lo, hi) = (simplex[0].1, simplex[d].1);
        if hi.is_finite() && (hi - lo) <= cfg.ftol * (lo.abs() + hi.abs()) + 1e-300 {
            break;
        }
        centroid.iter_mut().for_each(|c| *c = 0.0);
        for (x, _) in &simplex[..d] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / d as f64;
            }
        }
        let worst = simplex[d].0.clone();
        let xr = point(&centroid, &worst, -1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = point(&centroid, &worst, -2.0);
            let fe = f(&xe);
            evals += 1;
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[d].1 {
            let x = point(&centroid, &worst, -0.5);
            let v = f(&x);
            (x, v)
        } else {
            let x = point(&centroid, &worst, 0.5);
            let v = f(&x);
            (x, v)
        };
        evals += 1;
        if fc < simplex[d].1.min(fr) {
            simplex[d] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for (x, fx) in simplex.iter_mut().skip(1) {
            for (v, b) in x.iter_mut().zip(&best) {
                *v = b + 0.5 * (*v - b);
            }
            *fx = f(x);
        }
        evals += d;
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    (x, fx, evals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = minimize(f, &[-1.2, 1.0], &[0.5, 0.5], &NelderMeadConfig::default());
        assert!(r.value < 1e-14, "{}", r.value);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn respects_infeasible_region() {
        // Minimum of the unconstrained quadratic is at -1, outside x >= 0.
        let f = |x: &[f64]| if x[0] < 0.0 { f64::INFINITY } else { (x[0] + 1.0).powi(2) };
        let r = minimize(f, &[2.0], &[1.0], &NelderMeadConfig::default());
        assert!(r.x[0] >= 0.0 && r.x[0] < 1e-6);
    }
}
