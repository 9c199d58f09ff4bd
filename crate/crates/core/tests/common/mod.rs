#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use boundbench::engine::{EngineConfig, EngineRole};

/// `BOUNDBENCH_ENGINE` if set, else the vendored WASM Stockfish wrapper.
pub fn engine_path() -> PathBuf {
    std::env::var_os("BOUNDBENCH_ENGINE")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace_root().join("scripts").join("stockfish-wasm"))
}

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .expect("workspace root")
}

pub fn super_engine(depth: u32, multipv: u32) -> EngineConfig {
    EngineConfig::new(engine_path(), EngineRole::Super, depth, multipv, "stockfish-wasm")
}

pub fn restricted_engine(depth: u32) -> EngineConfig {
    EngineConfig::new(engine_path(), EngineRole::Restricted, depth, 1, "stockfish-wasm")
}

use boundbench::chess::{legal_uci_moves, play_uci, side_to_move, START_FEN};
use boundbench::engine::{EngineError, EvalResult, PvLine, Score};
use boundbench::measures::EvaluationSource;
use boundbench::pgn::{
    game_id, GameRecord, GameResult, MoveEvent, PlayerInfo, TimeAddition, TimeControlSpec,
};
use sha2::{Digest, Sha256};

fn hash_u64(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0]);
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

/// Deterministic pseudo-engine: scores are hashes of (fen, move), the
/// restricted choice is the legal move ranked `restricted_rank` by score.
pub struct StubSource {
    pub multipv: usize,
    pub restricted_rank: usize,
}

impl StubSource {
    pub fn scored(&self, fen: &str) -> Vec<PvLine> {
        let mut lines: Vec<PvLine> = legal_uci_moves(fen)
            .unwrap()
            .into_iter()
            .map(|u| {
                let cp = (hash_u64(&[fen, &u]) % 301) as i32 - 150;
                PvLine { uci: u, score: Score::cp(cp) }
            })
            .collect();
        lines.sort_by(|a, b| b.score.value.cmp(&a.score.value).then(a.uci.cmp(&b.uci)));
        lines
    }

    fn result(&self, fen: &str, lines: Vec<PvLine>, bestmove: String) -> EvalResult {
        EvalResult {
            fen: fen.to_string(),
            engine_tag: "stub".into(),
            depth: 12,
            lines,
            bestmove,
            nodes: 100 + hash_u64(&[fen]) % 1000,
            elapsed_seconds: 0.01 + (hash_u64(&["t", fen]) % 100) as f64 / 100.0,
        }
    }
}

impl EvaluationSource for StubSource {
    fn super_eval(&self, fen: &str) -> Result<EvalResult, EngineError> {
        let mut lines = self.scored(fen);
        if lines.is_empty() {
            return Err(EngineError::NoLegalMoves(fen.into()));
        }
        let best = lines[0].uci.clone();
        lines.truncate(self.multipv);
        Ok(self.result(fen, lines, best))
    }

    fn restricted_eval(&self, fen: &str) -> Result<EvalResult, EngineError> {
        let lines = self.scored(fen);
        let pick = lines[self.restricted_rank.min(lines.len() - 1)].clone();
        Ok(self.result(fen, vec![pick.clone()], pick.uci))
    }
}

/// A legal game of `plies` half-moves with synthetic clocks under
/// 40/5400+30:1800+30, or `None` if the random walk ends early.
pub fn synthetic_game(seed: u64, plies: u32, white_elo: u32, black_elo: u32) -> Option<GameRecord> {
    let tc = TimeControlSpec::new(5400, 30, vec![TimeAddition { at_move: 40, added_seconds: 1800 }]);
    let mut fen = START_FEN.to_string();
    let mut clocks = [5400i64, 5400i64];
    let mut moves = Vec::new();
    for ply in 1..=plies {
        let legal = legal_uci_moves(&fen).unwrap();
        if legal.is_empty() {
            return None;
        }
        let pick = &legal[(hash_u64(&[&seed.to_string(), &fen]) % legal.len() as u64) as usize];
        let mover = side_to_move(&fen).unwrap();
        let slot = ply as usize % 2;
        let full = ply.div_ceil(2);
        let spent = (hash_u64(&["clk", &seed.to_string(), &ply.to_string()]) % 240) as i64;
        clocks[slot] = (clocks[slot] - spent + 30 + i64::from(tc.addition_at(full))).max(0);
        moves.push(MoveEvent {
            ply,
            mover: mover.into(),
            san: pick.clone(),
            uci: pick.clone(),
            fen_before: fen.clone(),
            clock_after: Some(clocks[slot] as u32),
        });
        fen = play_uci(&fen, pick).unwrap();
    }
    let (white, black) = (format!("White {seed}"), format!("Black {seed}"));
    Some(GameRecord {
        game_id: game_id("Synthetic", "2024.01.01", &seed.to_string(), &white, &black),
        event: "Synthetic".into(),
        site: "?".into(),
        date: "2024.01.01".into(),
        round: seed.to_string(),
        white: PlayerInfo { name: white, elo: Some(white_elo) },
        black: PlayerInfo { name: black, elo: Some(black_elo) },
        result: GameResult::Draw,
        time_control: Some(tc),
        moves,
    })
}

/// The first `n` seeds from `start` that yield complete games.
pub fn synthetic_games(start: u64, n: usize, plies: u32) -> Vec<GameRecord> {
    (start..)
        .filter_map(|s| synthetic_game(s, plies, 2600 + (s % 7) as u32 * 20, 2650))
        .take(n)
        .collect()
}
