//! Group-sequential design, monitoring, and simulation for two-arm
//! time-to-event trials.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: normal distribution, the stagewise exit-probability
//!   recursion, and bracketed root finding.
//! - [`design`]: Lan-DeMets O'Brien-Fleming spending, event targets,
//!   boundaries on the z and hazard-ratio scales, power.
//! - [`timing`]: expected event accrual and predicted cutoff dates.
//! - [`monitoring`]: recalculation for over-/underrunning, decisions, and
//!   the analysis designation state machine.
//! - [`inference`]: naive and stagewise-ordering adjusted estimates.
//! - [`sim`]: patient-level Monte Carlo of the whole design.

// Negated comparisons are how inputs reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod error;
pub mod inference;
pub mod monitoring;
pub mod numerics;
pub mod sim;
pub mod timing;

pub use error::{Error, Result};
