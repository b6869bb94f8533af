//! Online learning of residential demand-response opt-out behavior with
//! air-conditioner power control.
//!
//! The crate is organized bottom-up:
//!
//! - [`domain`]: event configuration, factor vectors, feasibility.
//! - [`thermal`]: linear and GP indoor-temperature models.
//! - [`behavior`]: logistic stay-in model and opt-out simulation.
//! - [`objective`]: expected-cost objectives, gradients, Monte-Carlo oracle.
//! - [`solver`]: projected-gradient local solves and dual coordination.
//! - [`online`]: Thompson-sampling event loop with variational updates.
//! - [`harness`]: populations, campaigns, regret, baselines, reports.

pub mod behavior;
pub mod domain;
pub mod error;
pub mod harness;
pub mod objective;
pub mod online;
pub mod rng;
pub mod solver;
pub mod thermal;

pub use error::{Error, Result};
