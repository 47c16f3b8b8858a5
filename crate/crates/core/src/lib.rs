//! Attractor-based rewriting of distributed model copies, and the
//! simulations and attacks used to measure how well the copies resist
//! replication and collusion.
//!
//! The crate is organised bottom-up:
//!
//! - [`numeric`] and [`seed`]: score vectors, top-2 gaps and deterministic
//!   per-stream randomness.
//! - [`model`]: a synthetic prototype classifier and labelled datasets.
//! - [`attractor`]: keyed lattice fields of bumps and holes.
//! - [`rewriter`]: buyer copies combining a model with an attractor field
//!   under a fixed or U-shaped adaptive weight.
//! - [`sim1`], [`sim2`]: the Gaussian-summation and union-of-balls Monte
//!   Carlo formulations with independent oracles.
//! - [`attacks`]: DeepFool-style and boundary collusion attacks.
//! - [`analysis`]: score-shift decomposition, clustering and accuracy tables.

// Negated float comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod attacks;
pub mod attractor;
pub mod curve;
pub mod error;
pub mod export;
pub mod model;
pub mod numeric;
pub mod rewriter;
pub mod seed;
pub mod sim1;
pub mod sim2;

pub use error::{Error, Result};
pub use numeric::{Sample, ScoreVector};
