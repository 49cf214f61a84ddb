//! Fault detection for linearized pseudorange positioning under non-Gaussian
//! nominal errors.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] builds linearized measurement systems and simulates
//!   constellation geometry.
//! * [`estimator`] solves the full-set and leave-one-out weighted least squares
//!   problems.
//! * [`residual`] forms jackknife residuals and solution separations as explicit
//!   linear combinations of the measurement errors.
//! * [`dist`] carries gridded densities, their convolution and quantiles, and the
//!   NIG error model.
//! * [`overbound`] fits Gaussian and Principal Gaussian overbounds.
//! * [`detector`] runs the Bonferroni-corrected jackknife test and the solution
//!   separation test.
//! * [`harness`] drives the worldwide simulation, replay and timing experiments.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detector;
pub mod dist;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod harness;
pub mod overbound;
pub mod residual;

pub use error::{Error, Result};
