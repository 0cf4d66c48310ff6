//! Estimation stack for the market impact of renewable generation
//! forecasts on electricity prices.
//!
//! The crate provides, bottom to top:
//!
//! * [`data`] — a typed half-hourly market table: CSV ingestion with
//!   schema remapping and exclusion accounting, derived calendar and
//!   penetration features, and binned means with confidence intervals.
//! * [`local_poly`] — locally weighted second-order polynomial regression
//!   over a (renewable level, hour) fitting grid, for conditional means
//!   and conditional quantiles.
//! * [`learners`] — nuisance regressors: gradient-boosted trees and ridge.
//! * [`dml`] — cross-fitted partially linear double machine learning for
//!   a global average treatment effect.
//! * [`local_dml`] — the windowed variant: overlapping count-based windows
//!   over a conditioning variable, a bootstrap of the full cross-fitted
//!   estimate per window, Gaussian smoothing, and percentile bands; plus
//!   the rolling temporal analysis and the observational comparator.
//! * [`synth`] — synthetic data generators with known ground truth, used
//!   as the oracle for every estimator above.
//!
//! All estimators are deterministic functions of their inputs and seeds;
//! windows and bootstrap replicates draw from per-index derived RNG
//! streams, so results do not depend on the parallel schedule.

pub mod data;
pub mod dml;
pub mod error;
pub mod learners;
pub mod local_dml;
pub mod local_poly;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
