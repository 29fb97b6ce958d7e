//! Periodically modulated logistic growth: trajectories, time-occupancy
//! densities and Fisher information.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod density;
pub mod error;
pub mod experiments;
pub mod fisher;
pub mod integrate;
pub mod model;
pub mod svg;

pub use error::{Error, Result};
pub use model::{ModelSpec, Variant};
