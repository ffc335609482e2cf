//! Moving-gate interception for a quadrotor: synthetic event stream, spiking
//! tracker, rotor energy model, velocity network and intercept planner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod fit;
pub mod harness;
pub mod numeric;
pub mod pgnn;
pub mod planner;
pub mod scene;
pub mod snn;

pub use error::{Error, Result};
