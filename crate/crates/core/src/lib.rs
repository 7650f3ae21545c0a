//! Multi-camera object re-identification with spatial-temporal fusion.
//!
//! The crate estimates camera-network topology from detection logs, fuses
//! appearance similarity with transition-time evidence through a small
//! trainable network, and follows identities across cameras with causal
//! identity matching. A seeded simulator produces ground-truth scenarios for
//! testing the whole chain.

pub mod appearance;
pub mod cim;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod simulator;
pub mod similarity;
pub mod topology;

pub use error::{Error, Result};
