//! Cluster-robust inference for linear regression.
//!
//! Everything here is pure computation over in-memory data: per-cluster
//! cross-product blocks, OLS and restricted OLS, the CV1/CV2/CV3 sandwich
//! estimators, pairs and wild cluster bootstraps, score-variance tests of the
//! clustering level, two-way clustering, heterogeneity diagnostics, and the
//! targeted Monte Carlo and placebo-regression harnesses used to judge how
//! reliable a given method is for a given dataset.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line and thread pools live in the `clusterkit` crate; stochastic drivers
//! here are parameterised over an [`exec::Executor`] so that a parallel
//! backend can be plugged in without changing any result.
#![no_std]

extern crate alloc;

pub mod bootstrap;
pub mod crve;
pub mod design;
pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod linalg;
pub mod rng;
pub mod simulate;
pub mod svtest;
pub mod twoway;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
