//! Platoon formation in mixed traffic.
//!
//! A connected and automated vehicle (CAV) leads a string of human-driven
//! vehicles (HDVs) into a control zone. It brakes at a closed-form constant
//! rate so that the HDVs, which follow a delayed optimal-velocity law, close
//! their gaps and settle into a platoon at a chosen time `t_p`.
//!
//! - [`model`]: vehicle and scenario types, spacing and gap algebra
//! - [`ovm`]: the HDV car-following law and its delay buffer
//! - [`controller`]: braking level, feasible transition durations, plans
//! - [`sim`]: fixed-step simulation
//! - [`metrics`]: transition and formation detection
//! - [`sweep`]: robustness sweeps
//! - [`io`]: scenario files, CSV and JSON outputs

// `!(x > 0.0)` rejects NaN along with the bad range
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod ovm;
pub mod sim;
pub mod sweep;

pub use error::{Bound, Error, Result};
