//! Simulator for adaptive multi-step federated learning.
//!
//! Clients run a variable number of local gradient steps per round under a
//! per-round time budget. The crate provides the objective oracles, the
//! gradient-difference tools, the exact error-recursion machinery, the
//! budgeted step scheduler, baseline strategies, dataset loaders and an
//! experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod datasets;
pub mod error;
pub mod federation;
pub mod gda;
pub mod harness;
pub mod objectives;
pub mod scheduler;
pub mod vector;

pub use error::{Error, Result};
pub use vector::ParamVector;
