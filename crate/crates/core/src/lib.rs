//! Sampling and checking random one-dimensional operators.
//!
//! Lattice potential fields and their Green matrices live in [`beta`] and
//! [`green`]; the half-line chain in [`matsumoto_yor`]; Brownian continuum
//! objects in [`kernel`] and [`spectrum`]. Every numerical claim is wrapped
//! as an experiment in [`experiments`], which the `vrjp-lab` binary and the
//! acceptance suite run.

// `!(x > 0.0)` is how validation rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beta;
pub mod error;
pub mod experiments;
pub mod green;
pub mod kernel;
pub mod linalg;
pub mod matsumoto_yor;
pub mod spectrum;
pub mod stats;
pub mod stochastic;

pub use error::{Error, Result};
