//! Command-line front end for the loop-neuron simulator: configuration,
//! rate-array generation, validation runs and demonstrations.

pub mod config;
pub mod error;
pub mod commands;
pub mod gates;
pub mod manifest;
pub mod net;
pub mod ninepixel;
pub mod transfer;

pub use error::{CliError, Result};
