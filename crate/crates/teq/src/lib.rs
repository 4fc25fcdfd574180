//! Randomization inference for quantiles of individual treatment effects.
//!
//! Given a completely randomized experiment (CRE) or a stratified randomized
//! experiment (SRE), this crate tests null hypotheses of the form "the k-th
//! smallest individual treatment effect among treated (or control) units is at
//! most c" using rank sum statistics, adaptively combines several rank
//! transformations while keeping finite-sample validity, and inverts the tests
//! into simultaneous lower prediction/confidence bounds for all effect
//! quantiles.
//!
//! The crate is organized around the inference pipeline:
//!
//! * [`ranks`] — within-group ranks with deterministic tie-breaking, rank
//!   transformations (Wilcoxon, Stephenson, polynomial on normalized ranks),
//!   and exact finite-population moments of transformed ranks.
//! * [`nulldist`] — randomization null laws of distribution-free statistics,
//!   exact by enumeration or by seeded Monte Carlo, with the tail function `G`
//!   and the minimum-p calibration function.
//! * [`cre`] — worst-case imputations, single-statistic p-values, and the
//!   three combination routes for completely randomized designs.
//! * [`sre`] — weighted stratified statistics, per-stratum infimum tables, and
//!   the knapsack / branch-and-bound / LP machinery that optimizes combined
//!   statistics over allocations of hypothesized large effects across strata.
//! * [`intervals`] — test inversion into simultaneous lower bounds and the
//!   pooling of treated/control tables into all-units confidence bounds.
//!
//! All randomness is derived from a single master seed through labeled
//! sub-streams, so results are reproducible and independent of the worker
//! count. The `parallel` feature (on by default) evaluates Monte-Carlo draws,
//! per-quantile inversions, and similar embarrassingly parallel loops with
//! rayon; without it the same code runs sequentially.

pub mod data;
pub mod error;
pub mod exec;
pub mod seeds;

pub mod cre;
pub mod intervals;
pub mod nulldist;
pub mod ranks;
pub mod sre;

pub use data::{Dataset, UnitRecord};
pub use error::{Error, Result};
