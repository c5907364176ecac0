//! Wasserstein regression with empirical measures (REM).
//!
//! Distribution-valued responses are observed only through raw samples of
//! varying (possibly tiny) size. Every unit's sample is turned into a step
//! quantile function on a shared grid, the Fréchet regression weights are
//! applied element-wise, and the weighted average is projected back onto
//! the space of quantile functions.
//!
//! - [`measures`]: empirical measures, quantile grids, distances, barycenters,
//!   monotone projection and quantile-to-density conversion.
//! - [`regression`]: global and local Fréchet regression weights, model
//!   fitting and prediction.
//! - [`baseline`]: the kernel-presmoothing two-step comparison method.
//! - [`simulation`]: generative settings I–IV, integrated squared error and a
//!   reproducible Monte Carlo harness.
//! - [`io`]: CSV ingestion and plot-ready output records.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
mod error;
pub mod io;
pub mod measures;
pub mod regression;
pub mod simulation;
pub mod stats;

#[cfg(test)]
#[path = "../tests/oracle/mod.rs"]
mod oracle;

pub use error::{RemError, Result};
pub use measures::{DensityCurve, DomainInterval, EmpiricalMeasure, QuantileGrid};
pub use regression::{CovariateSample, Kernel, Mode, Prediction, RemConfig, RemModel};

/// Default cap on the common grid size.
pub const DEFAULT_GRID_CAP: usize = 5000;
