//! Experiment harness: config parsing, the prepare/train/sweep/baseline/eval
//! pipelines and their CSV outputs.

pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{ExperimentConfig, Family, Variant};
