//! Experiment tooling over the simulator core: config parsing, the artifact
//! writer, grid sweeps, and summary aggregation.

pub mod analysis;
pub mod artifacts;
pub mod config;
pub mod runner;
pub mod summary;
pub mod sweep;
