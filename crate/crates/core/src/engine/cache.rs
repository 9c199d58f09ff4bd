use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EngineError, EvalResult};
use crate::chess::normalize_fen;

/// Cache key over the normalized position, engine tag, depth and MultiPV.
///
/// Move counters are not part of the key, so transpositions share an entry.
/// Scores that depend on repetition history are approximated as a result.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub text: String,
    pub hash: String,
}

impl CacheKey {
    pub fn new(fen: &str, engine_tag: &str, depth: u32, multipv: u32) -> Self {
        let text = format!(
            "{}|{}|{}|{}",
            normalize_fen(fen),
            engine_tag,
            depth,
            multipv
        );
        let digest = Sha256::digest(text.as_bytes());
        let hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        CacheKey { text, hash }
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    key: String,
    result: EvalResult,
}

/// Content-addressed directory of evaluation records, one JSON file per key.
///
/// Reads take no lock; writes are serialized and land through an atomic
/// rename so readers never observe partial records.
#[derive(Debug)]
pub struct EvalCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl EvalCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, EngineError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| EngineError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(&key.hash[..2]).join(format!("{}.json", key.hash))
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.path_for(key).exists()
    }

    /// Returns the stored result with `fen` set to the requested position.
    pub fn get(&self, key: &CacheKey, fen: &str) -> Option<EvalResult> {
        let bytes = fs::read(self.path_for(key)).ok()?;
        let record: Record = serde_json::from_slice(&bytes).ok()?;
        if record.key != key.text {
            log::warn!("cache collision on {}", key.hash);
            return None;
        }
        let mut result = record.result;
        result.fen = fen.to_string();
        Some(result)
    }

    pub fn put(&self, key: &CacheKey, result: &EvalResult) -> Result<(), EngineError> {
        let path = self.path_for(key);
        let err = |e: std::io::Error| EngineError::Cache(format!("{}: {e}", path.display()));
        let record = Record {
            key: key.text.clone(),
            result: result.clone(),
        };
        let bytes = serde_json::to_vec_pretty(&record).map_err(|e| EngineError::Cache(e.to_string()))?;
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let parent = path.parent().expect("sharded path");
        fs::create_dir_all(parent).map_err(err)?;
        let tmp = parent.join(format!(".{}.tmp", key.hash));
        let mut f = fs::File::create(&tmp).map_err(err)?;
        f.write_all(&bytes).map_err(err)?;
        f.sync_all().map_err(err)?;
        fs::rename(&tmp, &path).map_err(err)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        walk_json(&self.dir)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn walk_json(dir: &Path) -> usize {
    let Ok(entries) = fs::read_dir(dir) else {
        return 0;
    };
    entries
        .flatten()
        .map(|e| {
            let p = e.path();
            if p.is_dir() {
                walk_json(&p)
            } else if p.extension().is_some_and(|x| x == "json") {
                1
            } else {
                0
            }
        })
        .sum()
}
