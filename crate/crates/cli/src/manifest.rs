use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, bytes: &[u8]) -> Self {
        Self { path: path.to_path_buf(), sha256: sha256_hex(bytes) }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Provenance record written next to every artifact.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub command_line: Vec<String>,
    pub config: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    /// Exact bytes of every input file read, corpus included.
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Value>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(config: Value, master_seed: Option<u64>) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            command_line: std::env::args_os().map(|a| a.to_string_lossy().into_owned()).collect(),
            config,
            master_seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: None,
            started_at: now(),
            finished_at: String::new(),
        }
    }

    /// Write the manifest as `<artifact>.manifest.json`.
    pub fn finish(mut self, artifact: &Path) -> Result<PathBuf> {
        self.finished_at = now();
        let path = manifest_path(artifact);
        let text = serde_json::to_string_pretty(&self)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name: OsString = artifact.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}
