//! Pipelines behind the `csranker` binary: synthetic data, training,
//! scoring, evaluation and stability benchmarks.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
