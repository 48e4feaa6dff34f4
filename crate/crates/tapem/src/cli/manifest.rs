//! Run manifest: resolved config, input digests, outputs, timing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Serialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub wall_ms: u64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(format!("{:x}", h.finalize()))
}

/// Collects the manifest while a command runs and writes it atomically
/// at completion.
pub struct ManifestBuilder {
    command: String,
    seed: u64,
    config: serde_json::Value,
    inputs: BTreeMap<String, String>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> ManifestBuilder {
        ManifestBuilder {
            command: command.to_string(),
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn write(self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let manifest = RunManifest {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command,
            seed: self.seed,
            config: self.config,
            inputs: self.inputs,
            outputs: self
                .outputs
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            wall_ms: self.started.elapsed().as_millis() as u64,
        };
        let body = serde_json::to_string_pretty(&manifest).expect("serializable");
        let path = dir.join("manifest.json");
        let tmp = dir.join("manifest.json.tmp");
        std::fs::write(&tmp, body + "\n")?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }
}
