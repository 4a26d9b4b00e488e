use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use serde::{Deserialize, Serialize};

/// Everything needed to reproduce a run's artifacts.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, replayed verbatim from `cwd`.
    pub argv: Vec<String>,
    pub cwd: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub tool_version: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub duration_s: f64,
}

fn display(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

impl RunManifest {
    pub fn new(
        command: &str,
        argv: &[String],
        config: serde_json::Value,
        seed: u64,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
        elapsed: Duration,
    ) -> anyhow::Result<Self> {
        let cwd = std::env::current_dir().context("reading working directory")?;
        Ok(Self {
            command: command.into(),
            argv: argv.to_vec(),
            cwd: cwd.display().to_string(),
            config,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            inputs: display(inputs),
            outputs: display(outputs),
            duration_s: elapsed.as_secs_f64(),
        })
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}
