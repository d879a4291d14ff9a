//! Adversarial tuning of the priors of a parametric scene generator.
//!
//! Scene parameters are drawn from factorized, max-normalized prior tables
//! by rejection sampling, laid out by a Gibbs-penalized marked point process
//! and rendered by a deterministic proxy renderer. A discriminator trained
//! against target data scores the generated samples, and a score-weighted
//! kernel density estimate of each parameter is multiplied into its prior.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dataset;
pub mod discriminator;
pub mod error;
pub mod kde;
pub mod priors;
pub mod renderer;
pub mod scene;
pub mod seed;
pub mod stats;
pub mod tuning;

pub use error::{Error, Result};
