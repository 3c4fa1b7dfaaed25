//! Laplacian-based option discovery for exploration.
//!
//! The crate covers the whole loop: environments with stochastic dynamics,
//! an exact spectral oracle for tabular graphs, a small dense neural engine,
//! a learned Laplacian representation, value-based agents, eigen-options and
//! their controllers, exploration baselines, and an experiment harness that
//! writes reproducible CSV metrics.

pub mod agents;
pub mod baselines;
pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod options;
pub mod repr;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
