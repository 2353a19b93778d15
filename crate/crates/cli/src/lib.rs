//! Experiment harness behind the `lyakrylov` binary.

pub mod commands;
pub mod config;
pub mod output;
pub mod problem;
pub mod svg;
