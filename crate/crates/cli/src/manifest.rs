//! Run manifests: the effective configuration, the seed and a SHA-256 per
//! output file, written next to the outputs.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub mode: String,
    pub threads: Option<usize>,
    pub started_unix_s: u64,
    pub wall_clock_s: f64,
    /// The configuration after command-line overrides, as TOML.
    pub config: String,
    pub outputs: Vec<OutputRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn manifest_name(command: &str) -> String {
    format!("{command}.manifest.json")
}

/// Collects the outputs of one command.
pub struct Run {
    dir: PathBuf,
    clock: Instant,
    manifest: Manifest,
}

impl Run {
    pub fn start(command: &str, cfg: &RunConfig, dir: &Path) -> Self {
        let started = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            dir: dir.to_path_buf(),
            clock: Instant::now(),
            manifest: Manifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed: cfg.seed,
                mode: cfg.mode.clone(),
                threads: cfg.threads,
                started_unix_s: started,
                wall_clock_s: 0.0,
                config: cfg.to_toml(),
                outputs: Vec::new(),
            },
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, file: &str, bytes: &[u8]) -> Result<(), CliError> {
        std::fs::write(self.dir.join(file), bytes)?;
        log::info!("wrote {}", self.dir.join(file).display());
        self.manifest.outputs.push(OutputRecord {
            file: file.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub fn finish(mut self) -> Result<Manifest, CliError> {
        self.manifest.wall_clock_s = self.clock.elapsed().as_secs_f64();
        let mut json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        json.push('\n');
        std::fs::write(self.dir.join(manifest_name(&self.manifest.command)), json)?;
        Ok(self.manifest)
    }
}
