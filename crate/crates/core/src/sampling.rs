//! Reproducible random streams and the simulation distributions.
//!
//! Every random quantity in the crate is drawn from an [`RngStream`] keyed by
//! `(master_seed, task_index)`. A stream maps onto one ChaCha12 key (derived
//! from the master seed) and one of its 2^64 independent counter streams
//! (the task index), so parallel tasks never share state and the output does
//! not depend on which worker runs which task.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

#[cfg(not(feature = "std"))]
use num_traits::Float;
use num_traits::Euclid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::estimators::{curve_model, CurveParams, CurvePoint};
use crate::geometry::{Angle, SpherePoint};

pub type StreamRng = ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub task_index: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, task_index: u64) -> Self {
        Self {
            master_seed,
            task_index,
        }
    }

    /// Stream `index` nested under this one. Children of distinct parents use
    /// distinct keys, children of one parent distinct counter streams.
    pub fn child(&self, index: u64) -> Self {
        let mut s = self.master_seed ^ self.task_index.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        let key = splitmix64(&mut s) ^ splitmix64(&mut s).rotate_left(17);
        Self::new(key, index)
    }

    /// A master seed for a whole family of streams owned by this task; equal
    /// to the key of [`RngStream::child`].
    pub fn derived_seed(&self) -> u64 {
        self.child(0).master_seed
    }

    pub fn rng(&self) -> StreamRng {
        let mut state = self.master_seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(self.task_index);
        rng
    }
}

/// Component standard deviation of the simulation mixtures, whose wrapped
/// normals have variance `pi / 50`.
pub const NULL_SD: f64 = 0.250_662_827_463_100_04;

/// Simulation families used by the size and power studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimDistribution {
    /// `0.5 N_w(a, sd) + 0.5 N_w(pi - a, sd)` on the circle; `sd` is a standard
    /// deviation in radians.
    CircleNullMixture { a: f64, sd: f64 },
    /// Two-pole null on `S^p`: first coordinate `N(0, 1e-6 / p^2)`, the rest
    /// uniform on the scaled `S^(p-1)`.
    SpherePoleNull { p: usize },
}

impl SimDistribution {
    pub fn validate(&self) -> crate::Result<()> {
        match *self {
            SimDistribution::CircleNullMixture { sd, a } => {
                if !(sd > 0.0) || !a.is_finite() {
                    return Err(crate::Error::invalid("circle mixture needs sd > 0 and finite a"));
                }
            }
            SimDistribution::SpherePoleNull { p } => {
                if p < 2 {
                    return Err(crate::Error::invalid("pole null needs p >= 2"));
                }
            }
        }
        Ok(())
    }
}

pub fn sample_circle_mixture<R: Rng + ?Sized>(a: f64, sd: f64, n: usize, rng: &mut R) -> Vec<Angle> {
    (0..n)
        .map(|_| {
            let center = if rng.random::<bool>() { a } else { PI - a };
            let z: f64 = StandardNormal.sample(rng);
            Angle::new(center + sd * z)
        })
        .collect()
}

/// Pole null with an explicit variance for the first coordinate
/// (`1e-6 / p^2` in the standard design).
pub fn sample_sphere_pole_null_with_variance<R: Rng + ?Sized>(
    p: usize,
    variance: f64,
    n: usize,
    rng: &mut R,
) -> Vec<SpherePoint> {
    assert!(p >= 2, "pole null needs p >= 2");
    let sd = variance.max(0.0).sqrt();
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            let y = (sd * z).clamp(-1.0, 1.0);
            let rest = uniform_unit_vector(p, rng);
            let scale = (1.0 - y * y).max(0.0).sqrt();
            let mut coords = Vec::with_capacity(p + 1);
            coords.push(y);
            coords.extend(rest.iter().map(|c| scale * c));
            SpherePoint::from_unit_unchecked(coords)
        })
        .collect()
}

pub fn sample_sphere_pole_null<R: Rng + ?Sized>(p: usize, n: usize, rng: &mut R) -> Vec<SpherePoint> {
    let pf = p as f64;
    sample_sphere_pole_null_with_variance(p, 1e-6 / (pf * pf), n, rng)
}

/// Uniform draws on `S^p` (unit vectors in `R^(p+1)`).
pub fn sample_uniform_sphere<R: Rng + ?Sized>(p: usize, n: usize, rng: &mut R) -> Vec<SpherePoint> {
    (0..n)
        .map(|_| SpherePoint::from_unit_unchecked(uniform_unit_vector(p + 1, rng)))
        .collect()
}

fn uniform_unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Synthetic growth-curve data: the curve model at `times` plus i.i.d.
/// `N(0, noise_sd^2)` errors. Stands in for length measurements such as
/// platelet filament growth, whose original data are not public.
pub fn sample_growth_curve<R: Rng + ?Sized>(
    theta: &CurveParams,
    times: &[f64],
    noise_sd: f64,
    rng: &mut R,
) -> Vec<CurvePoint> {
    times
        .iter()
        .map(|&t| {
            let z: f64 = StandardNormal.sample(rng);
            CurvePoint {
                t,
                length: curve_model(t, theta) + noise_sd * z,
            }
        })
        .collect()
}

/// n-out-of-n resample: `n` i.i.d. uniform indices in `[0, n)`.
pub fn resample_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Resample expressed as multiplicities of the original observations.
pub fn resample_counts<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut counts = alloc::vec![0.0; n];
    for i in resample_indices(n, rng) {
        counts[i] += 1.0;
    }
    counts
}

/// Wraps an angle into `[0, 2pi)`.
pub(crate) fn wrap_angle(x: f64) -> f64 {
    let r = Euclid::rem_euclid(&x, &TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_reproduce() {
        let s = RngStream::new(7, 3);
        let a: Vec<u64> = (0..8).map({
            let mut r = s.rng();
            move |_| r.random()
        }).collect();
        let b: Vec<u64> = (0..8).map({
            let mut r = s.rng();
            move |_| r.random()
        }).collect();
        assert_eq!(a, b);
        let mut other = RngStream::new(7, 4).rng();
        assert_ne!(a[0], other.random::<u64>());
    }

    #[test]
    fn children_differ_from_parent_and_each_other() {
        let s = RngStream::new(11, 0);
        let x: u64 = s.child(0).rng().random();
        let y: u64 = s.child(1).rng().random();
        let z: u64 = RngStream::new(11, 1).child(0).rng().random();
        assert_ne!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn degenerate_circle_mixture_hits_two_points() {
        let mut rng = RngStream::new(1, 0).rng();
        for a in sample_circle_mixture(0.0, 1e-300, 500, &mut rng) {
            let v = a.value();
            let near = |c: f64| crate::geometry::angle_distance(v, c) < 1e-12;
            assert!(near(0.0) || near(PI), "{v}");
        }
    }

    #[test]
    fn zero_variance_pole_null_lies_on_equator() {
        let mut rng = RngStream::new(2, 0).rng();
        for x in sample_sphere_pole_null_with_variance(3, 0.0, 200, &mut rng) {
            assert_eq!(x.coords()[0], 0.0);
            let norm: f64 = x.coords().iter().map(|c| c * c).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_growth_curve_is_the_model() {
        let theta = CurveParams::new(0.0, 20.0, 5.0, 0.01);
        let times: Vec<f64> = (0..=200).map(|i| 2.0 * i as f64).collect();
        let pts = sample_growth_curve(&theta, &times, 0.0, &mut RngStream::new(4, 0).rng());
        for p in &pts {
            assert_eq!(p.length, curve_model(p.t, &theta));
        }
    }

    #[test]
    fn null_sd_is_the_root_of_the_variance() {
        assert_eq!(NULL_SD, (PI / 50.0).sqrt());
    }

    #[test]
    fn single_index_resample() {
        let mut rng = RngStream::new(3, 0).rng();
        assert_eq!(resample_indices(1, &mut rng), alloc::vec![0]);
    }

    #[test]
    fn resample_is_deterministic() {
        let s = RngStream::new(5, 9);
        assert_eq!(resample_indices(50, &mut s.rng()), resample_indices(50, &mut s.rng()));
    }

    #[test]
    fn wrap_angle_range() {
        for x in [-7.0, -TAU, -1e-18, 0.0, 3.0, TAU, 100.0] {
            let w = wrap_angle(x);
            assert!((0.0..TAU).contains(&w), "{x} -> {w}");
        }
    }
}
