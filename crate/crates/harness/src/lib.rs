//! Experiment harness for `fcp-core`.
//!
//! - [`config`]: TOML experiment configuration with command-line overrides.
//! - [`dataset`]: the FCPD binary dataset format.
//! - [`model`]: the FCPM binary model format.
//! - [`data`]: seeded dataset generation for Darcy, Poisson and Navier–Stokes.
//! - [`experiments`]: the six experiment drivers.
//! - [`stages`]: the individual pipeline steps behind the CLI subcommands.
//! - [`report`]: CSV tables, manifests and summary statistics.

mod binary;
pub mod config;
pub mod data;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod model;
pub mod report;
pub mod stages;

pub use config::{Experiment, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use experiments::{run_experiment, RunReport};
