//! Config-driven front end for the `nmcore` solver.

pub mod artifacts;
pub mod config;
pub mod experiments;

use std::path::Path;

use anyhow::{Context, Result};

pub use config::{parse, ConfigError, ExperimentConfig};
pub use experiments::{run_experiment, validate_text, Outcome, Overrides};

/// Reads and parses a configuration file; `ConfigError`s stay downcastable.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse(&text)?)
}
