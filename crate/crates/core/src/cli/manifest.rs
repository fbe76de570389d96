use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::commands::Artifacts;
use super::{CliError, Command, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub workers: usize,
    pub wall_time_s: f64,
    pub config: serde_json::Value,
    pub outputs: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(super) fn write(command: Command, cfg: &RunConfig, out: &Path, artifacts: &Artifacts, wall: Duration) -> Result<(), CliError> {
    let mut outputs = Vec::new();
    for rel in artifacts.files() {
        let full = out.join(rel);
        let bytes = std::fs::read(&full).map_err(|e| CliError::io(&full, e))?;
        outputs.push(ManifestEntry {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
    }
    outputs.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        command: command.name().to_owned(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        seed: cfg.ga.seed,
        workers: cfg.workers,
        wall_time_s: wall.as_secs_f64(),
        config: serde_json::to_value(cfg).map_err(|e| CliError::Config(e.to_string()))?,
        outputs,
    };
    let dir = out.join("manifests");
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let path = dir.join(format!("{}.json", command.name()));
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
}
