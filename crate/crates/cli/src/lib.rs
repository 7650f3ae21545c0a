//! Command-line pipelines: simulate a scenario, estimate the camera
//! topology, train the fusion network, and evaluate or run causal identity
//! matching, with every artifact linked by content digests.

pub mod app;
pub mod artifacts;
pub mod commands;
pub mod config;
pub mod digest;
pub mod error;

pub use error::{CliError, CliResult};
