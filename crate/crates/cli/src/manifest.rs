use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use semreg::mesh::SimilarityTransform;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{io_error, CliError};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| io_error(path, e))?))
}

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Normalization {
    pub source: SimilarityTransform,
    pub target: SimilarityTransform,
}

/// Resolved settings, input hashes, and timings of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<InputFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
    pub phases: Vec<Phase>,
    pub status: String,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub results: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, threads: usize, config: &[(&str, String)]) -> Self {
        Self {
            tool: "semreg".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            threads,
            config: config.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            inputs: Vec::new(),
            normalization: None,
            phases: Vec::new(),
            status: "running".into(),
            results: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<String, CliError> {
        let sha256 = hash_file(path)?;
        self.inputs.push(InputFile { role: role.into(), path: path.display().to_string(), sha256: sha256.clone() });
        Ok(sha256)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text).map_err(|e| io_error(path, e))
    }
}

/// Wall-clock timer for named phases.
pub struct PhaseTimer {
    start: Instant,
}

impl PhaseTimer {
    pub fn start() -> Self {
        Self { start: Instant::now() }
    }

    pub fn finish(self, name: &str, into: &mut Vec<Phase>) {
        into.push(Phase { name: name.into(), seconds: self.start.elapsed().as_secs_f64() });
    }
}
