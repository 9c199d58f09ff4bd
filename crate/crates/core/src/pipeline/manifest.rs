use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of an ordered list of labelled parts.
pub fn combine_hashes(parts: &[(&str, &str)]) -> String {
    let mut text = String::new();
    for (k, v) in parts {
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push('\n');
    }
    sha256_hex(text.as_bytes())
}

pub fn file_hash(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// An output file, relative to the run directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hash of everything the stage read: config sections and upstream
    /// artifacts. Equal hashes with intact artifacts mean nothing to redo.
    pub input_hash: String,
    pub started: String,
    pub finished: String,
    pub artifacts: Vec<ArtifactRecord>,
    pub counts: BTreeMap<String, f64>,
}

/// Provenance of a run directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunManifest {
    /// Hash of the configuration snapshot; every artifact carries it.
    pub run_hash: String,
    pub config_snapshot: String,
    pub tool_version: String,
    pub created: String,
    pub updated: String,
    pub engine_tags: Vec<String>,
    pub engine_names: Vec<String>,
    pub dataset_hash: Option<String>,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Option<RunManifest>, PipelineError> {
        let path = run_dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let bytes = fs::read(&path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, run_dir: &Path) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| PipelineError::Io(e.to_string()))?;
        write_atomic(&run_dir.join(MANIFEST_FILE), text.as_bytes())
    }

    /// True when `stage` ran on `input_hash` and its artifacts are unchanged.
    pub fn is_current(&self, run_dir: &Path, stage: &str, input_hash: &str) -> bool {
        let Some(rec) = self.stages.get(stage) else {
            return false;
        };
        rec.input_hash == input_hash
            && rec.artifacts.iter().all(|a| {
                file_hash(&run_dir.join(&a.path)).is_ok_and(|h| h == a.sha256)
            })
    }

    pub fn artifact_hash(&self, stage: &str, path: &str) -> Option<&str> {
        self.stages
            .get(stage)?
            .artifacts
            .iter()
            .find(|a| a.path == path)
            .map(|a| a.sha256.as_str())
    }
}

/// Writes through a temporary file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let err = |e: std::io::Error| PipelineError::Io(format!("{}: {e}", path.display()));
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(err)?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(err)?;
    fs::rename(&tmp, path).map_err(err)
}
