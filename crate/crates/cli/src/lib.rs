//! Command-line pipeline around the `hin_embed` library: configuration,
//! stage orchestration with caching, and the run manifest.

pub mod app;
pub mod config;
pub mod manifest;
pub mod pipeline;

pub use config::{Config, ConfigError};
pub use manifest::RunManifest;
pub use pipeline::{run_config_file, run_pipeline, synthesize};
