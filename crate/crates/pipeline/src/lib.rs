//! Configuration-driven pipeline around `spev-core`: calibrate, baseline,
//! estimate, fit, evaluate, synthesize and serve annotations.
//!
//! Every output embeds the SHA-256 of the effective configuration, as a
//! `# config_hash=` first line in CSV files and a `config_hash` field in
//! JSON files.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod serve;
pub mod stages;

pub use config::{LoadedConfig, PipelineConfig};
pub use error::PipelineError;
