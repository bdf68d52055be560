//! Dataset generation, training and paired Monte Carlo sweeps for the
//! `dppsd` detectors, plus the `dppsd` command-line front end.

pub mod commands;
pub mod config;
pub mod detectors;
mod error;
pub mod results;
pub mod sweep;

pub use error::{BenchError, Result};
