//! Per-run output directories and the `run.json` manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use dmsclass::fsutil::write_atomic;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "run.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub args: Vec<String>,
    /// Fully resolved configuration; replaying it reproduces the outputs.
    pub config: Value,
    pub seeds: Value,
    /// Relative to the run directory.
    pub artifacts: Vec<String>,
    pub started_unix_ms: u128,
    pub duration_seconds: f64,
}

pub struct Run {
    pub dir: PathBuf,
    command: String,
    artifacts: Vec<String>,
    started: Instant,
    started_unix_ms: u128,
}

impl Run {
    /// `explicit` wins; otherwise `<base>/<command>-<unix millis>`.
    pub fn create(command: &str, base: &Path, explicit: Option<&Path>) -> CliResult<Self> {
        let started_unix_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        let dir = match explicit {
            Some(d) => d.to_path_buf(),
            None => base.join(format!("{command}-{started_unix_ms}")),
        };
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Self {
            dir,
            command: command.to_string(),
            artifacts: Vec::new(),
            started: Instant::now(),
            started_unix_ms,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        write_atomic(&path, contents.as_bytes())?;
        self.record(name);
        Ok(())
    }

    pub fn record(&mut self, name: &str) {
        self.artifacts.push(name.to_string());
    }

    pub fn finish(self, config: Value, seeds: Value) -> CliResult<PathBuf> {
        let manifest = RunManifest {
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            args: std::env::args().skip(1).collect(),
            config,
            seeds,
            artifacts: self.artifacts,
            started_unix_ms: self.started_unix_ms,
            duration_seconds: self.started.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(dmsclass::Error::from)?;
        text.push('\n');
        write_atomic(&self.dir.join(MANIFEST), text.as_bytes())?;
        Ok(self.dir)
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// `--seed`, then the configuration file, then `DMS_SEED`.
pub fn resolve_seed(flag: Option<u64>, from_file: Option<u64>) -> CliResult<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    if from_file.is_some() {
        return Ok(from_file);
    }
    match std::env::var("DMS_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("DMS_SEED must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}
