//! Bayesian hierarchical sigmoid Emax dose-response modelling with shrinkage
//! priors on covariate effects.
//!
//! The crate covers the full analysis pipeline for parallel-group dose-finding
//! trials:
//!
//! - [`data`]: loading, validation, standardization and dummy-coding of trial
//!   data, including the covariate-group bookkeeping needed for shared local
//!   shrinkage of dummy variables.
//! - [`emax`]: the deterministic sigmoid Emax model mathematics and the
//!   covariate maps on its parameters.
//! - [`priors`]: spike-and-slab, horseshoe and regularized-horseshoe priors,
//!   their dependent (prognostic/predictive coupled) variants, exact prior
//!   samplers and log densities.
//! - [`posterior`]: the joint log posterior on unconstrained coordinates with
//!   analytic gradients.
//! - [`mcmc`]: a dynamic-trajectory Hamiltonian sampler with warmup
//!   adaptation, an indicator Gibbs scan for spike-and-slab models, and
//!   convergence diagnostics.
//! - [`calibration`]: choosing horseshoe global scales by matching prior tail
//!   probabilities against a spike-and-slab benchmark.
//! - [`subgroup`]: treatment-effect posteriors, predictive-covariate selection
//!   via HPD intervals, and subgroup identification.
//! - [`simulation`]: synthetic trial generation and a replication harness for
//!   operating characteristics.

pub mod calibration;
pub mod data;
pub mod emax;
pub mod mcmc;
pub mod posterior;
pub mod prefit;
pub mod priors;
pub mod rng;
pub mod simulation;
pub mod stats;
pub mod subgroup;

mod error;

pub use error::{Error, Result};
