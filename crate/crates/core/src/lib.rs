//! Distributed H-infinity observer networks that reject biasing attacks on
//! sensor nodes.
//!
//! Every node runs a local observer plus an attack detector. The detector
//! estimates the attack input and feeds the estimate back to cancel it.
//! Gains come from two families of differential Riccati equations, each
//! integrated from node-local data once a central pre-pass has solved two
//! small LMIs over the communication graph.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod designer;
pub mod error;
pub mod matlin;
pub mod metrics;
pub mod network;
pub mod pipeline;
pub mod plant;
pub mod scenario;
pub mod simulator;

pub use error::{Error, Result};
pub use matlin::Matrix;
