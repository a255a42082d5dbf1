//! Robust multi-objective Bayesian optimization under input noise.
//!
//! The crate identifies the global multivariate value-at-risk (MVaR) set of
//! black-box objectives by optimizing the value-at-risk of randomly weighted
//! Chebyshev scalarizations (the MARS acquisition family).
//!
//! Layout, bottom-up:
//! - [`pareto`]: dominance, Pareto fronts, exact hypervolume.
//! - [`risk`]: VaR, scalarizations, MVaR sets, feasibility weighting.
//! - [`qmc`] and [`noise`]: scrambled Sobol points and input-noise processes.
//! - [`gp`]: Matérn-5/2 GP surrogates, joint sampling, RFF paths.
//! - [`acquisition`]: MARS-NEI/TS/UCB and ParEGO baselines.
//! - [`optim`]: multi-start box-constrained acquisition maximization.
//! - [`problems`]: the synthetic benchmark registry.
//!
//! Every objective is maximized.

// `!(x >= 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod error;
pub mod gp;
pub mod noise;
pub mod optim;
pub mod pareto;
pub mod problems;
pub mod qmc;
pub mod risk;

pub use error::{Error, Result};
