use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::error::CliResult;
use crate::io::sha256_file;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command: resolved configuration, seeds,
/// version and checksums of inputs and outputs, plus wall-clock timings.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub timings: BTreeMap<String, f64>,
}

pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    timings: BTreeMap<String, f64>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: impl Serialize) -> CliResult<Self> {
        Ok(Self {
            command: command.into(),
            config: serde_json::to_value(config)?,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            started: Instant::now(),
        })
    }

    pub fn seed(&mut self, name: impl Into<String>, seed: u64) {
        self.seeds.insert(name.into(), seed);
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Records the seconds elapsed since `since` under `name`.
    pub fn time(&mut self, name: &str, since: Instant) {
        self.timings.insert(name.into(), since.elapsed().as_secs_f64());
    }

    /// Writes `manifest.json` into `dir`.
    pub fn write(mut self, dir: &Path) -> CliResult<PathBuf> {
        self.timings.insert("total_seconds".into(), self.started.elapsed().as_secs_f64());
        let digest = |p: &PathBuf| -> CliResult<FileDigest> {
            Ok(FileDigest { path: p.display().to_string(), sha256: sha256_file(p)? })
        };
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").into(),
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs.iter().map(digest).collect::<CliResult<_>>()?,
            outputs: self.outputs.iter().map(digest).collect::<CliResult<_>>()?,
            timings: self.timings,
        };
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(path)
    }
}
