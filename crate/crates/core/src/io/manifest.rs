//! Run manifests: what produced an output directory and how to check it.
//!
//! A manifest holds no wall-clock time. Its timestamps are the span of the
//! data that was processed, so equal inputs give byte-identical manifests.

use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Path relative to the directory the manifest describes, or as given
    /// on the command line for inputs.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub data_start: Option<DateTime<Utc>>,
    pub data_end: Option<DateTime<Utc>>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::read(path, e))?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    pub fn new(config_text: &str, seed: u64) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: sha256_hex(config_text.as_bytes()),
            seed,
            data_start: None,
            data_end: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn with_span(mut self, start: DateTime<Utc>, end: DateTime<Utc>) -> Self {
        self.data_start = Some(start);
        self.data_end = Some(end);
        self
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// Record every regular file in `dir` except the manifest itself,
    /// sorted by name.
    pub fn record_outputs(&mut self, dir: &Path) -> Result<()> {
        let mut names: Vec<String> = std::fs::read_dir(dir)
            .map_err(|e| Error::read(dir, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n != MANIFEST_FILE)
            .collect();
        names.sort();
        self.outputs = names
            .into_iter()
            .map(|n| {
                let sha256 = sha256_file(&dir.join(&n))?;
                Ok(FileDigest { path: n, sha256 })
            })
            .collect::<Result<_>>()?;
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        super::save_json(&dir.join(MANIFEST_FILE), self)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        super::load_json(&dir.join(MANIFEST_FILE))
    }

    /// Output files whose current digest differs from the recorded one.
    pub fn verify_outputs(&self, dir: &Path) -> Vec<String> {
        let mut bad = Vec::new();
        for f in &self.outputs {
            match sha256_file(&dir.join(&f.path)) {
                Ok(d) if d == f.sha256 => {}
                _ => bad.push(f.path.clone()),
            }
        }
        bad
    }
}
