//! Experiment harness for adaptively augmented PU learning.
//!
//! Reads and writes datasets, configs, metrics, histograms and checkpoints,
//! and drives training runs and method comparisons for the `aapu` binary.

pub mod checkpoint;
pub mod cli;
pub mod compare;
pub mod config;
pub mod dataset;
pub mod error;
pub mod report;
pub mod run;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
