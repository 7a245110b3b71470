//! Artifact ledger shared by the pipeline commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ctxbias::Error;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
    /// Checksum of the vocabulary the artifact was built against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    /// Keyed by role: `corpus`, `vocab`, `lm`, `classes`, `bias`, `lattices`, ...
    pub artifacts: BTreeMap<String, Artifact>,
    /// Settings of the command that wrote each role.
    pub config: BTreeMap<String, serde_json::Value>,
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn normalize(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}

/// A manifest bound to its file, or a no-op when none was requested.
pub struct Ledger {
    file: Option<PathBuf>,
    manifest: PipelineManifest,
}

impl Ledger {
    pub fn open(file: Option<&Path>) -> CliResult<Self> {
        let manifest = match file {
            Some(f) if f.exists() => {
                let text = fs::read_to_string(f).map_err(|e| Error::io(f, e))?;
                serde_json::from_str(&text).map_err(|e| CliError::in_file(f, Error::parse(e.line(), e.to_string())))?
            }
            _ => PipelineManifest::default(),
        };
        Ok(Self {
            file: file.map(Path::to_path_buf),
            manifest,
        })
    }

    /// Refuse an input that differs from what the manifest recorded for its role.
    pub fn verify(&self, role: &str, path: &Path, vocab: Option<&str>) -> CliResult<()> {
        let Some(entry) = self.manifest.artifacts.get(role) else {
            return Ok(());
        };
        if normalize(&entry.path) != normalize(path) {
            return Ok(());
        }
        if file_sha256(path)? != entry.sha256 {
            return Err(integrity(
                path,
                format!("{role} changed since it was recorded in the manifest"),
            ));
        }
        if let (Some(expected), Some(got)) = (&entry.vocab, vocab) {
            if expected != got {
                return Err(integrity(
                    path,
                    format!("{role} was built for vocabulary {expected}, got {got}"),
                ));
            }
        }
        Ok(())
    }

    pub fn record(
        &mut self,
        role: &str,
        path: &Path,
        vocab: Option<String>,
        config: serde_json::Value,
    ) -> CliResult<()> {
        if self.file.is_none() {
            return Ok(());
        }
        let artifact = Artifact {
            path: normalize(path),
            sha256: file_sha256(path)?,
            vocab,
        };
        self.manifest.artifacts.insert(role.to_string(), artifact);
        self.manifest.config.insert(role.to_string(), config);
        Ok(())
    }

    pub fn save(&self) -> CliResult<()> {
        if let Some(f) = &self.file {
            let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
            fs::write(f, text + "\n").map_err(|e| Error::io(f, e))?;
        }
        Ok(())
    }
}

fn integrity(path: &Path, message: String) -> CliError {
    CliError::in_file(path, Error::Integrity(message))
}
