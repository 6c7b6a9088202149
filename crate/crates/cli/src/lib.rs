//! Experiment harness for the GUM optimizer family: JSON experiment configs,
//! seeded runs with CSV traces and checkpoints, and the verification suites
//! behind the `gum` binary.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod failure;
pub mod verify;

pub use config::{ExperimentConfig, Seeds};
pub use failure::{exit_code, Failure, FailureKind};
