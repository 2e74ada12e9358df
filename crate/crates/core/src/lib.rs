//! Loss-distribution-approach toolkit for heavy-tailed event losses.
//!
//! The crate covers the full chain from raw loss records to capital and
//! insurance figures:
//!
//! * [`dists`]: the tail-index parameterised generalized Pareto law, candidate
//!   severity families, the real gamma function and the symmetric
//!   variance-gamma law used as a reference distribution.
//! * [`data`]: loss-event records, CSV ingestion, covariate encoding,
//!   company-year frequency aggregation and a synthetic generator.
//! * [`tail`]: Hill estimator, Kolmogorov-Smirnov test, threshold selection.
//! * [`gamlss`]: penalized maximum-likelihood regressions with log links on
//!   every distribution parameter.
//! * [`modelsel`]: joint vs decoupled severity models, variance test,
//!   family comparison tables.
//! * [`rank`]: rank regression, concordance curves and rank graduation
//!   accuracy testing.
//! * [`capital`]: single-loss-approximation VaR and its Monte Carlo oracle.
//! * [`insure`]: zero-utility premiums, pool sizes and relative wealth.

pub mod capital;
pub mod data;
pub mod dists;
mod error;
pub mod gamlss;
pub mod insure;
pub mod modelsel;
pub mod optim;
pub mod quad;
pub mod rank;
pub mod rng;
pub mod tail;

pub use error::{Error, Result};
