use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the manifest's directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Provenance record written next to every data-producing command's output.
///
/// Only `started_at` and `finished_at` vary between runs with the same
/// config and seed, plus the digests of files that hold wall-clock timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub base_seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
    pub files: Vec<FileEntry>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start<C: Serialize>(command: &str, config: &C, base_seed: Option<u64>) -> Result<Self> {
        Ok(RunManifest {
            schema_version: ftsc_core::SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: serde_json::to_value(config).map_err(|e| CliError::Encode(e.to_string()))?,
            base_seed,
            started_at: now(),
            finished_at: String::new(),
            files: Vec::new(),
        })
    }

    /// Digests `path` and adds it to the inventory under `name`.
    pub fn record(&mut self, path: &Path, name: &str) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.files.push(FileEntry {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    /// Stamps the end time and writes the manifest as pretty JSON.
    pub fn finish(mut self, path: &Path) -> Result<RunManifest> {
        self.finished_at = now();
        let text = serde_json::to_string_pretty(&self).map_err(|e| CliError::Encode(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))?;
        Ok(self)
    }

    pub fn read(path: &Path) -> Result<RunManifest> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn digest(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|f| f.path == name).map(|f| f.sha256.as_str())
    }
}

/// `dir/name`, and the sibling path for single-file outputs:
/// `out.json` -> `out.<suffix>`.
pub(crate) fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub(crate) fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
