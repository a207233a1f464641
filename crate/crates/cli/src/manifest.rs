use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: &'static str,
    pub engine_version: &'static str,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub elapsed_seconds: f64,
}

impl RunManifest {
    pub fn new(subcommand: &'static str, config: impl Serialize) -> Self {
        Self {
            subcommand,
            engine_version: env!("CARGO_PKG_VERSION"),
            config: serde_json::to_value(config).expect("config serializes"),
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            elapsed_seconds: 0.0,
        }
    }

    pub fn write_as(mut self, dir: &Path, name: &str, started: Instant) -> anyhow::Result<()> {
        self.elapsed_seconds = started.elapsed().as_secs_f64();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(name), serde_json::to_string_pretty(&self)? + "\n")?;
        Ok(())
    }
}
