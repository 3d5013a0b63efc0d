//! Configuration, dispatch and CSV output for the `relaxed-bench` binary.
//!
//! Every experiment is described by an [`ExperimentConfig`] resolved from
//! defaults, an optional TOML file and `--key value` overrides. Each CSV it
//! writes opens with the resolved configuration as `#` comment lines.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{parse_config, parse_flags, ConfigError, Experiment, ExperimentConfig, Provenance};
pub use experiments::{run, Report};
