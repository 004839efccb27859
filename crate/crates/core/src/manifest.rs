//! Run manifests: the resolved configuration, seed, timing and a SHA-256
//! digest of every output file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Command, ExperimentConfig};
use crate::{Error, Result};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    /// File name relative to the manifest's directory.
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

impl OutputDigest {
    pub fn of(file: impl Into<String>, contents: &[u8]) -> Self {
        Self { file: file.into(), sha256: sha256_hex(contents), bytes: contents.len() as u64 }
    }
}

pub fn sha256_hex(contents: &[u8]) -> String {
    let mut out = String::with_capacity(64);
    for b in Sha256::digest(contents).iter() {
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Every parameter in canonical text form, including defaults.
    pub config: BTreeMap<String, String>,
    pub out_dir: String,
    pub master_seed: Option<u64>,
    pub threads: usize,
    pub duration_seconds: f64,
    pub outputs: Vec<OutputDigest>,
}

impl RunManifest {
    pub fn new(cfg: &ExperimentConfig, threads: usize, duration_seconds: f64, outputs: Vec<OutputDigest>) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: cfg.command.name().into(),
            config: cfg.canonical(),
            out_dir: cfg.out_dir.display().to_string(),
            master_seed: cfg.seed(),
            threads,
            duration_seconds,
            outputs,
        }
    }

    /// Rebuilds the configuration the run used.
    pub fn config(&self) -> Result<ExperimentConfig> {
        let command: Command = self.command.parse()?;
        ExperimentConfig::resolve(command, &self.config, &BTreeMap::new()).map(|c| c.with_out_dir(&self.out_dir))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Recomputes each digest from the files next to the manifest and lists
    /// the files that are missing or differ.
    pub fn check_files(&self, dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|o| std::fs::read(dir.join(&o.file)).map(|b| sha256_hex(&b) != o.sha256).unwrap_or(true))
            .map(|o| o.file.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn json_roundtrip() {
        let cfg = ExperimentConfig::from_flags(Command::Threshold, &[("n", "4")]).unwrap();
        let m = RunManifest::new(&cfg, 2, 0.5, vec![OutputDigest::of("threshold.csv", b"x\n")]);
        let back: RunManifest = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.config().unwrap().canonical(), cfg.canonical());
    }
}
