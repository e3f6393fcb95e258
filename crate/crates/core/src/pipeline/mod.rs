//! Configuration, file formats and the stages of the reconstruction pipeline.

pub mod commands;
pub mod config;
pub mod files;

pub use commands::{
    cmd_corrupt, cmd_evaluate, cmd_generate, cmd_report, cmd_sweep, cmd_train, Layout, Manifest, ReportSummary,
};
pub use config::{ExperimentConfig, GenerateMode, Variant};
pub use files::Provenance;
