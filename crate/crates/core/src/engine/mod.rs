//! Drives external UCI engines and caches their analyses.
//!
//! Scores are stored exactly as the engine reports them, i.e. from the
//! perspective of the side to move. Conversion to White's perspective goes
//! through [`score_to_pawn_units`].

mod cache;
mod pool;
mod uci;

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chess::{Color, PositionError};

pub use cache::{CacheKey, EvalCache};
pub use pool::{start_pool, EnginePool, PoolStats};
pub use uci::{parse_info_line, InfoLine, UciSession};

/// Centipawn value assigned to a forced mate at distance zero; mates further
/// away lose one centipawn per move so that shorter mates rank higher.
pub const MATE_CENTIPAWNS: i32 = 32_700;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineRole {
    Super,
    Restricted,
}

fn default_hash_mb() -> u32 {
    16
}
fn default_threads() -> u32 {
    1
}
fn default_true() -> bool {
    true
}
fn default_handshake_ms() -> u64 {
    10_000
}
fn default_search_ms() -> u64 {
    600_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub binary_path: PathBuf,
    pub depth_limit: u32,
    pub multipv: u32,
    #[serde(default = "default_hash_mb")]
    pub hash_mb: u32,
    #[serde(default = "default_threads")]
    pub threads: u32,
    pub role: EngineRole,
    /// Identifies the engine build in cache keys and manifests.
    pub engine_tag: String,
    /// Clear hash tables before each position; requires a single thread.
    #[serde(default = "default_true")]
    pub deterministic: bool,
    #[serde(default = "default_handshake_ms")]
    pub handshake_timeout_ms: u64,
    #[serde(default = "default_search_ms")]
    pub search_timeout_ms: u64,
}

impl EngineConfig {
    pub fn new(
        binary_path: impl Into<PathBuf>,
        role: EngineRole,
        depth_limit: u32,
        multipv: u32,
        engine_tag: impl Into<String>,
    ) -> Self {
        Self {
            binary_path: binary_path.into(),
            depth_limit,
            multipv,
            hash_mb: default_hash_mb(),
            threads: 1,
            role,
            engine_tag: engine_tag.into(),
            deterministic: true,
            handshake_timeout_ms: default_handshake_ms(),
            search_timeout_ms: default_search_ms(),
        }
    }

    pub fn handshake_timeout(&self) -> Duration {
        Duration::from_millis(self.handshake_timeout_ms)
    }

    pub fn search_timeout(&self) -> Duration {
        Duration::from_millis(self.search_timeout_ms)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: &str| Err(EngineError::InvalidConfig(msg.to_string()));
        if self.depth_limit < 1 {
            return bad("depth_limit must be at least 1");
        }
        if self.multipv < 1 {
            return bad("multipv must be at least 1");
        }
        if self.deterministic && self.threads != 1 {
            return bad("deterministic mode requires threads = 1");
        }
        if self.threads < 1 {
            return bad("threads must be at least 1");
        }
        Ok(())
    }
}

/// Checks the role pairing: the super engine must search deeper.
pub fn validate_engine_pair(
    super_engine: &EngineConfig,
    restricted: &EngineConfig,
) -> Result<(), EngineError> {
    super_engine.validate()?;
    restricted.validate()?;
    if super_engine.role != EngineRole::Super || restricted.role != EngineRole::Restricted {
        return Err(EngineError::InvalidConfig("engine roles are swapped".into()));
    }
    if super_engine.depth_limit <= restricted.depth_limit {
        return Err(EngineError::InvalidConfig(format!(
            "super depth {} must exceed restricted depth {}",
            super_engine.depth_limit, restricted.depth_limit
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreKind {
    Centipawns,
    MateIn,
}

/// An engine score from the perspective of the side to move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Score {
    pub kind: ScoreKind,
    /// Centipawns, or the signed mate distance in moves (never zero).
    pub value: i32,
}

impl Score {
    pub const fn cp(value: i32) -> Score {
        Score {
            kind: ScoreKind::Centipawns,
            value,
        }
    }

    /// `None` for a zero mate distance.
    pub fn mate(moves: i32) -> Option<Score> {
        (moves != 0).then_some(Score {
            kind: ScoreKind::MateIn,
            value: moves,
        })
    }

    /// Integer centipawns for the side to move, with mates mapped onto the
    /// ±32700 band.
    pub fn mover_centipawns(self) -> i32 {
        match self.kind {
            ScoreKind::Centipawns => self.value.clamp(-MATE_CENTIPAWNS, MATE_CENTIPAWNS),
            ScoreKind::MateIn => {
                let dist = self.value.unsigned_abs().min(MATE_CENTIPAWNS as u32) as i32;
                self.value.signum() * (MATE_CENTIPAWNS - dist)
            }
        }
    }

    /// The same score seen from the other side.
    pub fn negate(self) -> Score {
        Score {
            kind: self.kind,
            value: -self.value,
        }
    }
}

/// White-positive integer centipawns for a score reported with `perspective`
/// to move.
pub fn score_to_pawn_units(score: Score, perspective: Color) -> i32 {
    score.mover_centipawns() * perspective.sign()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PvLine {
    pub uci: String,
    pub score: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub fen: String,
    pub engine_tag: String,
    pub depth: u32,
    /// Best first, non-increasing in score for the side to move.
    pub lines: Vec<PvLine>,
    pub bestmove: String,
    pub nodes: u64,
    pub elapsed_seconds: f64,
}

impl EvalResult {
    pub fn best(&self) -> &PvLine {
        &self.lines[0]
    }

    pub fn best_centipawns(&self) -> i32 {
        self.best().score.mover_centipawns()
    }

    /// Mover-perspective centipawns of `uci` if it is among the lines.
    pub fn centipawns_of(&self, uci: &str) -> Option<i32> {
        self.lines
            .iter()
            .find(|l| l.uci == uci)
            .map(|l| l.score.mover_centipawns())
    }

    pub fn is_sorted(&self) -> bool {
        self.lines
            .windows(2)
            .all(|w| w[0].score.mover_centipawns() >= w[1].score.mover_centipawns())
    }
}

/// Seconds and nodes the engine needed to reach its configured depth.
pub fn complexity_of(eval: &EvalResult) -> (f64, u64) {
    (eval.elapsed_seconds, eval.nodes)
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("failed to spawn engine '{path}': {reason}")]
    Spawn { path: PathBuf, reason: String },
    #[error("engine '{path}' did not complete the UCI handshake within {timeout:?}")]
    HandshakeTimeout { path: PathBuf, timeout: Duration },
    #[error("engine crashed: {0}")]
    Crash(String),
    #[error("engine search timed out after {0:?}")]
    SearchTimeout(Duration),
    #[error(transparent)]
    IllegalFen(#[from] PositionError),
    #[error("position has no legal moves: {0}")]
    NoLegalMoves(String),
    #[error("unexpected engine output: {0}")]
    Protocol(String),
    #[error("invalid engine configuration: {0}")]
    InvalidConfig(String),
    #[error("evaluation cache: {0}")]
    Cache(String),
}
