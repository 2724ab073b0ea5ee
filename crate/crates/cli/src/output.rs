//! Artifact files, checksums and the run manifest.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::Job;
use crate::error::{CliError, CliResult};
use crate::json;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Output directory of one job.
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Artifacts {
    pub fn create(dir: PathBuf) -> CliResult<Artifacts> {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Artifacts { dir, files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, content: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, content).map_err(|e| CliError::io(&path, e))?;
        self.files.push(FileEntry {
            name: name.to_string(),
            bytes: content.len() as u64,
            sha256: hex::encode(Sha256::digest(content.as_bytes())),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let text = json::to_string(value).map_err(|e| CliError::config(format!("serializing {name}: {e}")))?;
        self.write(name, &text)
    }

    /// Write the manifest listing every artifact written so far.
    pub fn finish(mut self, manifest: ManifestData<'_>) -> CliResult<PathBuf> {
        let files = std::mem::take(&mut self.files);
        let m = RunManifest {
            command: manifest.command,
            job: manifest.job,
            options: manifest.options,
            versions: versions(),
            convergence: manifest.convergence,
            files,
            wall_clock_seconds: manifest.wall_clock_seconds,
        };
        self.write_json(MANIFEST, &m)?;
        Ok(self.dir.join(MANIFEST))
    }
}

pub struct ManifestData<'a> {
    pub command: &'a str,
    pub job: &'a Job,
    pub options: Value,
    pub convergence: Value,
    pub wall_clock_seconds: f64,
}

/// Resolved inputs, convergence data and checksums of one job. Every field
/// except `wall_clock_seconds` is reproducible.
#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    job: &'a Job,
    options: Value,
    versions: BTreeMap<&'static str, &'static str>,
    convergence: Value,
    files: Vec<FileEntry>,
    wall_clock_seconds: f64,
}

fn versions() -> BTreeMap<&'static str, &'static str> {
    let mut v = BTreeMap::new();
    for module in ["model", "analytic", "cumulant", "dynamics", "spectrum"] {
        v.insert(module, omsim::VERSION);
    }
    v.insert("cli", env!("CARGO_PKG_VERSION"));
    v
}
