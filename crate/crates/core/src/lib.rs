//! Analysis and simulation of two-hop relay MANETs whose relay buffers are
//! bounded.
//!
//! The [`model`] module evaluates the closed-form relay-buffer blocking
//! probability (RBP) and the queuing, delivery and end-to-end delays. The
//! [`sim`] module runs the same network slot by slot so every analytical
//! quantity can be checked against a measurement, and [`harness`] ties the
//! two together in load sweeps. [`acceptance`] holds the self-validation
//! suite shared by the test target and the `validate` subcommand.

pub mod acceptance;
mod error;
pub mod harness;
pub mod model;
mod params;
pub mod sim;

pub use error::{Error, Result};
pub use params::NetworkParams;
