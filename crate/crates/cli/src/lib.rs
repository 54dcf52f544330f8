//! Command-line orchestration for the hazard analysis pipeline: config
//! loading, per-video processing, service clients, submission files and a
//! synthetic dataset generator.

pub mod config;
pub mod error;
pub mod glob;
pub mod output;
pub mod pipeline;
pub mod service;
pub mod submission;
pub mod synth;

pub use config::PipelineConfig;
pub use error::PipelineError;
