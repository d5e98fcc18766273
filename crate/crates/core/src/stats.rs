//! Small numerical helpers shared by the detector, the test and the
//! verifiers: the standard normal distribution, empirical quantiles and the
//! one-sample Kolmogorov–Smirnov test.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::{Error, Result};

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * core::f64::consts::PI).sqrt()
}

/// Standard normal quantile `Phi^{-1}(u)`.
///
/// Acklam's rational approximation followed by two Halley steps against
/// `erfc`, which brings the absolute error near machine precision.
pub fn normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::invalid("normal quantile needs a probability in (0, 1)"));
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let low = 0.02425;
    let mut x = if u < low {
        tail((-2.0 * u.ln()).sqrt())
    } else if u > 1.0 - low {
        -tail((-2.0 * (1.0 - u).ln()).sqrt())
    } else {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    for _ in 0..2 {
        // Work with the smaller tail to keep the residual accurate.
        let e = if x < 0.0 {
            0.5 * libm::erfc(-x / core::f64::consts::SQRT_2) - u
        } else {
            (1.0 - u) - 0.5 * libm::erfc(x / core::f64::consts::SQRT_2)
        };
        let step = e / normal_pdf(x);
        x -= step / (1.0 + 0.5 * x * step);
    }
    Ok(x)
}

/// Order statistic `ceil(level * n)` (1-based) of `sorted`, i.e. the
/// smallest value whose empirical distribution function reaches `level`.
pub fn empirical_quantile(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    let rank = ((level * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Asymptotic Kolmogorov survival function `Q(lambda) = P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let j = j as f64;
        let term = (-2.0 * j * j * lambda * lambda).exp();
        sum += if j as i64 % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS test of `xs` against the continuous distribution `cdf`,
/// with the finite-sample correction `(sqrt n + 0.12 + 0.11 / sqrt n) D`.
pub fn ks_test(xs: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in v.iter().enumerate() {
        let f = cdf(*x);
        d = d.max(f - i as f64 / n).max((i as f64 + 1.0) / n - f);
    }
    let sn = n.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d),
    }
}

/// KS test of normality with mean and standard deviation estimated from `xs`.
pub fn ks_normality(xs: &[f64]) -> KsResult {
    let m = mean(xs);
    let s = variance(xs).sqrt();
    ks_test(xs, |x| normal_cdf((x - m) / s))
}

/// Critical value `c` with `P(sqrt(n) D_n > c) ~= 1 - level` from the
/// asymptotic Kolmogorov distribution, as a bound on `D_n`.
pub fn ks_band(n: usize, level: f64) -> f64 {
    let (mut lo, mut hi) = (0.2, 5.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_survival(mid) > 1.0 - level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let sn = (n as f64).sqrt();
    hi / (sn + 0.12 + 0.11 / sn)
}
