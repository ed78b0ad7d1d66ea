//! Experiment harness: synthetic data, seeded trial grids, CSV and JSON output.

use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

pub mod config;
pub mod data;
pub mod error;
pub mod report;
pub mod seeds;
pub mod slope;
pub mod verbs;

pub use error::{CliError, Result};

use config::ExperimentConfig;
use report::{write_report, Report};
use verbs::{verb_registry, RunContext};

/// Runs `verb` and writes its tables and summary into `out`.
pub fn execute(verb: &str, config: ExperimentConfig, seed: u64, out: &Path) -> Result<(Report, Vec<PathBuf>)> {
    let v = verb_registry().build(verb, &())?;
    let ctx = RunContext { config, seed };
    let report = v.run(&ctx)?;
    let mut extra = Map::new();
    extra.insert("config".into(), serde_json::to_value(&ctx.config)?);
    if let Some(name) = &ctx.config.experiment {
        extra.insert("experiment".into(), Value::from(name.as_str()));
    }
    let files = write_report(out, v.name(), seed, extra, &report)?;
    Ok((report, files))
}
