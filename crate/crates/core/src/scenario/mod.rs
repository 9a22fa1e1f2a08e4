//! Scenario files, parameter sweeps and result tables.

mod config;
pub mod report;
pub mod sweep;

pub use config::*;
