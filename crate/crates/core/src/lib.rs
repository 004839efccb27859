//! Dissemination noise as a screening device against p-hacking.
//!
//! The crate computes the principal's payoff from releasing a noisy copy of a
//! dataset when some researchers search every specification ("hackers") and
//! others test a prior hypothesis ("mavens"). It covers the static binary
//! model and its extensions, the dynamic data-reuse problem, and a
//! linear-regression Monte Carlo experiment. Every analytic formula has a
//! simulator or brute-force counterpart so results can be cross-checked.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod dynamic;
pub mod error;
pub mod extensions;
pub mod manifest;
pub mod mc;
pub mod prob;
pub mod regression;
pub mod runner;
pub mod screen;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};

/// Tolerance for exact probability identities.
pub const PROB_TOL: f64 = 1e-12;
/// Tolerance for optimizer comparisons.
pub const OPT_TOL: f64 = 1e-9;
