//! Orchestration layer for the contact-model toolkit: experiment
//! configuration, file formats, the comparison report, and the pipeline
//! that chains validation, spectral evaluation, lattice cross-checks,
//! simulation and estimation into one reproducible run.

pub mod config;
pub mod io;
pub mod pipeline;
pub mod report;

pub use config::{preset, preset_names, ExperimentConfig};
pub use pipeline::run_pipeline;
pub use report::ComparisonReport;
