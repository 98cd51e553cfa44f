//! Batch driver for cutting/stitching experiments: TOML configs, pipelines
//! that write plot-ready CSV with gnuplot scripts, and run manifests with
//! output checksums.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod plot;
pub mod reproduce;

pub use config::{Mode, Overrides, RunConfig};
pub use error::{CliError, Result};
pub use manifest::{OutputDir, RunManifest};
pub use pipeline::{run, RunOutput};
