//! Bootstrap test for non-uniqueness of m-estimator population descriptors.
//!
//! The crate fits an m-estimator to a sample, refits it on `B` n-out-of-n
//! bootstrap resamples, maps every bootstrap descriptor to a scalar (its
//! distance to the sample descriptor, or the magnitude of its first
//! principal-component score in the tangent space), and locates a secondary
//! cluster of those scalars with a multiscale slope detector. Twice the share
//! of bootstrap descriptors beyond the cluster cutoff is the test statistic;
//! small values are evidence that the population descriptor is unique.
//!
//! Estimators provided:
//!
//! * intrinsic (Fréchet) means on the circle and on `S^p`,
//! * a four-parameter saturating growth curve fitted by least squares,
//! * Gaussian mixture models fitted by EM.
//!
//! Everything here is pure computation on `alloc` collections. With the
//! default `std` feature, replicate and trial loops run on rayon; results do
//! not depend on the thread count.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod asymptotics;
pub mod bootstrap;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod multiscale;
pub mod par;
pub mod sampling;
pub mod stats;
pub mod uniqueness;

pub use error::{Error, Result};
