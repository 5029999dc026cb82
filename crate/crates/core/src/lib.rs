//! Observed Markov model forecasting of monthly conflict fatalities.
//!
//! A unit's month is in one of four states defined by whether it and the
//! previous month saw fatalities. Random-forest classifiers learn the
//! covariate-dependent probability of each state's two legal successors,
//! quantile regression forests learn fatality distributions in the two
//! nonzero states, and a Monte Carlo simulator rolls both forward to
//! produce draw-based predictive densities. Benchmarks and proper scoring
//! rules (CRPS, binned ignorance, interval score) are included for
//! evaluation.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod config;
pub mod draws;
pub mod error;
pub mod features;
pub mod forest;
pub mod markov;
pub mod metrics;
pub mod panel;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, ErrorKind, Result};

/// Crate version embedded in model archives and artifact metadata.
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
