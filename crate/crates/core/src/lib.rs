//! Simulation and analysis of single-photon transmission through a
//! four-port Mach–Zehnder magneto-optical isolator.

// Negated comparisons are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod device;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod magneto;
pub mod optics;
pub mod quantum;

pub use error::{Error, Result};
