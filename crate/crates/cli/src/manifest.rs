//! Provenance record written next to every command's artifacts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    /// sha256 of the compact JSON of `config`.
    pub config_digest: String,
    /// Input path to sha256 of its bytes.
    pub input_digests: BTreeMap<String, String>,
    pub output_digests: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| eliminators_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(sha256_hex(&bytes))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Collects digests while a command runs; timestamps are the only
/// run-dependent fields.
pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    started_at: String,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config,
            seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            started_at: now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> CliResult<()> {
        self.outputs.insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    pub fn finish(self) -> RunManifest {
        let compact = serde_json::to_vec(&self.config).expect("config serializes");
        RunManifest {
            command: self.command,
            config_digest: sha256_hex(&compact),
            config: self.config,
            input_digests: self.inputs,
            output_digests: self.outputs,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: self.started_at,
            finished_at: now(),
        }
    }
}
