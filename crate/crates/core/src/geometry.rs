//! Closed-form geometry of the circle and of `S^p` embedded in `R^(p+1)`.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, SymmetricEigen};
#[cfg(not(feature = "std"))]
use num_traits::Float;
use num_traits::Euclid;
use serde::{Deserialize, Serialize};

use crate::sampling::wrap_angle;
use crate::{Error, Result};

/// Below this tangent norm `exp_map` returns the base point unchanged.
const EXP_ZERO_NORM: f64 = 1e-14;
/// Points closer than this to the antipode have no logarithm.
pub const CUT_LOCUS_MARGIN: f64 = 1e-9;

/// A point on the unit sphere `S^p`, stored as a unit vector of length `p + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpherePoint(Vec<f64>);

impl SpherePoint {
    /// Normalizes `coords`. Fails for vectors of length < 2 or (near) zero norm.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::invalid("sphere points need at least 2 coordinates"));
        }
        let norm = norm(&coords);
        if !(norm > 1e-300) || !norm.is_finite() {
            return Err(Error::invalid("cannot normalize a zero or non-finite vector"));
        }
        Ok(Self(coords.into_iter().map(|c| c / norm).collect()))
    }

    pub(crate) fn from_unit_unchecked(coords: Vec<f64>) -> Self {
        debug_assert!((norm(&coords) - 1.0).abs() < 1e-9);
        Self(coords)
    }

    /// Standard basis vector `e_axis` in `R^(p+1)`.
    pub fn basis(dim: usize, axis: usize) -> Self {
        let mut v = alloc::vec![0.0; dim];
        v[axis] = 1.0;
        Self(v)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    /// Intrinsic dimension `p`.
    pub fn dim(&self) -> usize {
        self.0.len() - 1
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|c| -c).collect())
    }
}

/// A tangent vector at `base`, orthogonal to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub base: SpherePoint,
    pub vec: Vec<f64>,
}

impl TangentVector {
    /// Projects `vec` onto the tangent space at `base`.
    pub fn project(base: &SpherePoint, vec: &[f64]) -> Result<Self> {
        check_dims(base.coords().len(), vec.len())?;
        let along = dot(base.coords(), vec);
        let v = vec
            .iter()
            .zip(base.coords())
            .map(|(x, b)| x - along * b)
            .collect();
        Ok(Self {
            base: base.clone(),
            vec: v,
        })
    }

    pub fn norm(&self) -> f64 {
        norm(&self.vec)
    }
}

/// An angle on the circle, wrapped into `[0, 2pi)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Angle(f64);

impl Angle {
    pub fn new(radians: f64) -> Self {
        Self(wrap_angle(radians))
    }

    pub fn from_degrees(deg: f64) -> Self {
        Self::new(deg.to_radians())
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Embedding `(cos, sin)` in `S^1`.
    pub fn to_sphere(self) -> SpherePoint {
        SpherePoint(alloc::vec![self.0.cos(), self.0.sin()])
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        Err(Error::DimensionMismatch { left: a, right: b })
    } else {
        Ok(())
    }
}

/// Geodesic distance on `S^p`.
pub fn sphere_distance(x: &SpherePoint, y: &SpherePoint) -> Result<f64> {
    check_dims(x.0.len(), y.0.len())?;
    Ok(raw_distance(&x.0, &y.0))
}

pub(crate) fn raw_distance(x: &[f64], y: &[f64]) -> f64 {
    dot(x, y).clamp(-1.0, 1.0).acos()
}

pub fn exp_map(base: &SpherePoint, v: &TangentVector) -> Result<SpherePoint> {
    check_dims(base.0.len(), v.vec.len())?;
    let mut out = alloc::vec![0.0; base.0.len()];
    raw_exp(&base.0, &v.vec, &mut out);
    Ok(SpherePoint(out))
}

/// `cos|v| base + sin|v| v/|v|`, renormalized against rounding drift.
pub(crate) fn raw_exp(base: &[f64], v: &[f64], out: &mut [f64]) {
    let t = norm(v);
    if t < EXP_ZERO_NORM {
        out.copy_from_slice(base);
        return;
    }
    let (s, c) = (t.sin() / t, t.cos());
    for ((o, b), x) in out.iter_mut().zip(base).zip(v) {
        *o = c * b + s * x;
    }
    let n = norm(out);
    out.iter_mut().for_each(|o| *o /= n);
}

pub fn log_map(base: &SpherePoint, q: &SpherePoint) -> Result<TangentVector> {
    check_dims(base.0.len(), q.0.len())?;
    let mut v = alloc::vec![0.0; base.0.len()];
    raw_log(&base.0, &q.0, &mut v)?;
    Ok(TangentVector {
        base: base.clone(),
        vec: v,
    })
}

pub(crate) fn raw_log(base: &[f64], q: &[f64], out: &mut [f64]) -> Result<()> {
    let c = dot(base, q).clamp(-1.0, 1.0);
    // Component of q orthogonal to base; its norm is sin(theta).
    for ((o, b), x) in out.iter_mut().zip(base).zip(q) {
        *o = x - c * b;
    }
    let s = norm(out);
    let theta = s.atan2(c);
    if theta > PI - CUT_LOCUS_MARGIN {
        return Err(Error::CutLocus);
    }
    if s < 1e-300 {
        out.iter_mut().for_each(|o| *o = 0.0);
        return Ok(());
    }
    let scale = theta / s;
    out.iter_mut().for_each(|o| *o *= scale);
    Ok(())
}

pub fn circle_distance(a: Angle, b: Angle) -> f64 {
    angle_distance(a.0, b.0)
}

pub(crate) fn angle_distance(a: f64, b: f64) -> f64 {
    let d = Euclid::rem_euclid(&(a - b).abs(), &TAU);
    d.min(TAU - d)
}

/// Signed shortest rotation from `from` to `to`, in `(-pi, pi]`.
pub(crate) fn angle_log(from: f64, to: f64) -> f64 {
    let d = Euclid::rem_euclid(&(to - from), &TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

/// Leading principal axis of tangent vectors about the origin (uncentered PCA).
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAxis {
    pub direction: Vec<f64>,
    pub scores: Vec<f64>,
    pub eigenvalue: f64,
}

/// Uncentered PCA of tangent vectors sharing one base point.
pub fn tangent_pca_first(vectors: &[TangentVector]) -> Result<(TangentVector, Vec<f64>)> {
    let base = &vectors.first().ok_or(Error::EmptyInput)?.base;
    for v in vectors {
        check_dims(base.0.len(), v.vec.len())?;
        let same = v
            .base
            .0
            .iter()
            .zip(&base.0)
            .all(|(a, b)| (a - b).abs() <= 1e-12);
        if !same {
            return Err(Error::invalid("tangent vectors must share a base point"));
        }
    }
    let raw: Vec<&[f64]> = vectors.iter().map(|v| v.vec.as_slice()).collect();
    let axis = first_principal_axis(&raw)?;
    Ok((
        TangentVector {
            base: base.clone(),
            vec: axis.direction,
        },
        axis.scores,
    ))
}

/// Top eigenvector of `(1/B) sum v v^T` and the scores `<v_j, u>`.
///
/// The direction's sign is fixed so that its largest-magnitude coordinate is
/// positive.
pub fn first_principal_axis(vectors: &[&[f64]]) -> Result<PrincipalAxis> {
    if vectors.len() < 2 {
        return Err(Error::invalid("principal axis needs at least 2 vectors"));
    }
    let dim = vectors[0].len();
    if dim == 0 {
        return Err(Error::invalid("zero-dimensional tangent vectors"));
    }
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for v in vectors {
        check_dims(dim, v.len())?;
        for i in 0..dim {
            for j in 0..=i {
                m[(i, j)] += v[i] * v[j];
            }
        }
    }
    let b = vectors.len() as f64;
    for i in 0..dim {
        for j in 0..=i {
            let x = m[(i, j)] / b;
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    if m.iter().all(|x| *x == 0.0) {
        return Err(Error::DegenerateCloud);
    }
    let (direction, eigenvalue) = if dim == 1 {
        (alloc::vec![1.0], m[(0, 0)])
    } else {
        let eig = SymmetricEigen::new(m);
        let top = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let col = eig.eigenvectors.column(top);
        (col.iter().copied().collect(), eig.eigenvalues[top])
    };
    let mut direction = direction;
    let n = norm(&direction);
    direction.iter_mut().for_each(|x| *x /= n);
    let pivot = direction
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(1.0);
    if pivot < 0.0 {
        direction.iter_mut().for_each(|x| *x = -*x);
    }
    let scores = vectors.iter().map(|v| dot(v, &direction)).collect();
    Ok(PrincipalAxis {
        direction,
        scores,
        eigenvalue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_uniform_sphere, RngStream};
    use core::f64::consts::FRAC_PI_2;

    fn e(dim: usize, i: usize) -> SpherePoint {
        SpherePoint::basis(dim, i)
    }

    #[test]
    fn distance_cases() {
        assert_eq!(sphere_distance(&e(3, 0), &e(3, 0)).unwrap(), 0.0);
        assert!((sphere_distance(&e(3, 0), &e(3, 0).negated()).unwrap() - PI).abs() < 1e-15);
        assert!((sphere_distance(&e(3, 0), &e(3, 1)).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(
            sphere_distance(&e(3, 0), &e(4, 0)),
            Err(Error::DimensionMismatch { left: 3, right: 4 })
        );
    }

    #[test]
    fn exp_cases() {
        let base = e(3, 0);
        let zero = TangentVector::project(&base, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(exp_map(&base, &zero).unwrap(), base);

        let quarter = TangentVector::project(&base, &[0.0, FRAC_PI_2, 0.0]).unwrap();
        let q = exp_map(&base, &quarter).unwrap();
        assert!(sphere_distance(&q, &e(3, 1)).unwrap() < 1e-12);

        let u = [0.0, 0.6, 0.8];
        let half = TangentVector::project(&base, &u.map(|x| x * PI)).unwrap();
        let anti = exp_map(&base, &half).unwrap();
        assert!(sphere_distance(&anti, &base.negated()).unwrap() < 1e-7);
    }

    #[test]
    fn log_cases() {
        let base = e(3, 0);
        assert!(log_map(&base, &base).unwrap().norm() == 0.0);
        let v = log_map(&base, &e(3, 1)).unwrap();
        assert!((v.vec[1] - FRAC_PI_2).abs() < 1e-15 && v.vec[0].abs() < 1e-15);
        assert_eq!(log_map(&base, &base.negated()), Err(Error::CutLocus));
    }

    #[test]
    fn circle_distance_cases() {
        assert_eq!(circle_distance(Angle::new(0.0), Angle::new(0.0)), 0.0);
        assert!((circle_distance(Angle::new(0.0), Angle::new(PI)) - PI).abs() < 1e-15);
        assert!((circle_distance(Angle::new(0.1), Angle::new(TAU - 0.1)) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn log_exp_round_trip_random() {
        let mut rng = RngStream::new(42, 0).rng();
        let bases = sample_uniform_sphere(3, 1000, &mut rng);
        let qs = sample_uniform_sphere(3, 1000, &mut rng);
        for (b, q) in bases.iter().zip(&qs) {
            if sphere_distance(b, q).unwrap() > PI - 1e-6 {
                continue;
            }
            let v = log_map(b, q).unwrap();
            assert!(dot(&v.vec, b.coords()).abs() < 1e-10);
            let back = exp_map(b, &v).unwrap();
            for (x, y) in back.coords().iter().zip(q.coords()) {
                assert!((x - y).abs() < 1e-9);
            }
            assert!((v.norm() - sphere_distance(b, q).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn pca_repeated_vector() {
        let base = e(3, 0);
        let v = TangentVector::project(&base, &[0.0, 0.3, -0.4]).unwrap();
        let vs = alloc::vec![v.clone(); 10];
        let (dir, scores) = tangent_pca_first(&vs).unwrap();
        for (d, x) in dir.vec.iter().zip(&v.vec) {
            assert!((d.abs() - (x / 0.5).abs()).abs() < 1e-12);
        }
        assert!(scores.iter().all(|s| (s.abs() - 0.5).abs() < 1e-12));
    }

    #[test]
    fn pca_symmetric_pair() {
        let base = e(3, 0);
        let v = TangentVector::project(&base, &[0.0, 1.0, 2.0]).unwrap();
        let w = TangentVector::project(&base, &[0.0, -1.0, -2.0]).unwrap();
        let (dir, scores) = tangent_pca_first(&[v.clone(), w]).unwrap();
        assert!((dot(&dir.vec, &v.vec).abs() - v.norm()).abs() < 1e-12);
        assert!((scores[0] + scores[1]).abs() < 1e-12);
        assert!((scores[0].abs() - v.norm()).abs() < 1e-12);
    }

    #[test]
    fn pca_rejects_zero_cloud() {
        let base = e(3, 0);
        let z = TangentVector::project(&base, &[0.0; 3]).unwrap();
        assert_eq!(tangent_pca_first(&[z.clone(), z]), Err(Error::DegenerateCloud));
    }
}
