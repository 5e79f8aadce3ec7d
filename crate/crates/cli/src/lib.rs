//! Command-line pipeline for the DRAM latency TRNG: measure, characterize,
//! enroll, generate, test and throughput.

pub mod args;
pub mod artifacts;
pub mod commands;
pub mod config;

pub use config::{PipelineConfig, ValidationError};
