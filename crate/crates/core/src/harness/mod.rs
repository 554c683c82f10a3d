//! Experiment harness: configuration, condition generation, method sweeps and
//! result files.

pub mod config;
pub mod run;
pub mod output;
pub mod cli;
