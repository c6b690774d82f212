//! Library surface of the benchmark harness; the `bench` binary is a thin
//! CLI over these modules.

pub mod config;
pub mod experiment;
pub mod metrics;
