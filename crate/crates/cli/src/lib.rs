//! Experiment harness behind the `mmucb` binary.

pub mod aggregate;
pub mod commands;
pub mod config;
pub mod selftest;

pub use config::{ExperimentConfig, ExperimentKind, Overrides};
