//! Learned reachable-state densities with exact polyhedral reachability.
//!
//! The pipeline: simulate a benchmark system ([`systems`]), assemble a
//! trajectory dataset ([`liouville`]), train a ReLU network that jointly
//! predicts the flow map and the log-density gain ([`net`]), enumerate the
//! network at a fixed time into affine polyhedral cells ([`rpm`]), and query
//! the cells for reachable sets with density and probability bounds
//! ([`reach`]). [`eval`] scores density estimates and reach-set volumes.

// `!(x > 0.0)` deliberately rejects NaN as well; index loops mirror the
// linear-algebra notation in the numeric kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod distribution;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod liouville;
pub mod manifest;
pub mod net;
pub mod reach;
pub mod rng;
pub mod rpm;
pub mod systems;

pub use error::{Error, Result};
