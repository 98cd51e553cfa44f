//! Output directory handling and the per-run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Written as `manifest.json` next to the results. `config` echoes the
/// resolved configuration, so `--config manifest.json` repeats the run.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputRecord>,
}

/// Collects output files for one run directory and writes the manifest last.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    command: String,
    config: serde_json::Value,
    seeds: Vec<u64>,
    started: Instant,
    started_unix: u64,
    outputs: Vec<OutputRecord>,
}

impl OutputDir {
    /// Creates `root` if needed and proves it writable before any work is
    /// done.
    pub fn prepare(root: &Path, command: impl Into<String>, config: &impl Serialize) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        let probe = root.join(".spincut-write-probe");
        fs::write(&probe, b"").map_err(|e| CliError::io(&probe, e))?;
        fs::remove_file(&probe).map_err(|e| CliError::io(&probe, e))?;
        let config = serde_json::to_value(config).expect("configs serialize to JSON");
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Ok(OutputDir {
            root: root.to_path_buf(),
            command: command.into(),
            config,
            seeds: Vec::new(),
            started: Instant::now(),
            started_unix,
            outputs: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn record_seeds(&mut self, seeds: impl IntoIterator<Item = u64>) {
        self.seeds.extend(seeds);
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let bytes = contents.as_ref();
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.outputs.push(OutputRecord { file: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() });
        Ok(path)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize to JSON");
        text.push('\n');
        self.write(name, text)
    }

    pub fn finish(self) -> Result<RunManifest> {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config: self.config,
            seeds: self.seeds,
            started_unix: self.started_unix,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            outputs: self.outputs,
        };
        let path = self.root.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
