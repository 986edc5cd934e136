//! Experiment driver for the multi-RAT simulator: configuration, sweeps,
//! CSV output and figures.

pub mod config;
pub mod plots;
pub mod scenario;
