//! Experiment harness: runs the query, ingest, solve and probe loop over
//! trials, sweeps its parameters and exports the results.
//!
//! A [`config::RunConfig`] describes one experiment. [`run::run_pal`] turns it
//! into a [`manifest::RunManifest`] holding every per-trial, per-checkpoint
//! metric plus mean and sample standard deviation across trials. Manifests
//! are deterministic in the config and seed apart from wall-time fields.

pub mod config;
pub mod error;
pub mod export;
pub mod manifest;
pub mod run;
pub mod stats;
pub mod sweep;

pub use config::RunConfig;
pub use error::{HarnessError, Result};
pub use manifest::RunManifest;
pub use run::{run_pal, run_with_labeler};
