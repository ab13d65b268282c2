//! Simulated characterization campaigns and closed-loop actuation for a
//! magneto-oscillatory tracker.
//!
//! Every campaign is driven by an [`config::ExperimentConfig`] and a single seed.
//! Per-trial seeds are derived from the campaign seed and the trial index, so a
//! report is byte-identical across runs and thread counts.

pub mod campaigns;
pub mod closed_loop;
pub mod config;
pub mod error;
pub mod report;
pub mod seed;
pub mod trial;

pub use error::{LabError, Result};
