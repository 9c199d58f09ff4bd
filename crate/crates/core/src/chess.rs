//! Thin position helpers over `shakmaty`, shared by ingestion, the engine
//! bridge and measure construction. Positions travel between modules as FEN
//! text so that records stay serializable.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use shakmaty::fen::Fen;
use shakmaty::uci::UciMove;
use shakmaty::{CastlingMode, Chess, EnPassantMode, FromSetup, Position};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    White,
    Black,
}

impl Color {
    pub fn other(self) -> Color {
        match self {
            Color::White => Color::Black,
            Color::Black => Color::White,
        }
    }

    /// +1 for White, -1 for Black.
    pub fn sign(self) -> i32 {
        match self {
            Color::White => 1,
            Color::Black => -1,
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Color::White => "white",
            Color::Black => "black",
        })
    }
}

impl From<shakmaty::Color> for Color {
    fn from(c: shakmaty::Color) -> Self {
        match c {
            shakmaty::Color::White => Color::White,
            shakmaty::Color::Black => Color::Black,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PositionError {
    #[error("illegal or malformed FEN '{fen}': {reason}")]
    IllegalFen { fen: String, reason: String },
    #[error("move '{uci}' is not legal in '{fen}'")]
    IllegalMove { fen: String, uci: String },
}

/// How a position without legal moves ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    Checkmate,
    Stalemate,
}

pub const START_FEN: &str = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1";

pub fn parse_position(fen: &str) -> Result<Chess, PositionError> {
    let illegal = |reason: String| PositionError::IllegalFen {
        fen: fen.to_string(),
        reason,
    };
    let parsed = Fen::from_str(fen.trim()).map_err(|e| illegal(e.to_string()))?;
    parsed
        .into_position(CastlingMode::Standard)
        .map_err(|e| illegal(e.to_string()))
}

pub fn to_fen(pos: &Chess) -> String {
    Fen::from_position(pos, EnPassantMode::Legal).to_string()
}

/// Board, side to move, castling rights and en-passant square. Move counters
/// are dropped so that transpositions share one key.
pub fn normalize_fen(fen: &str) -> String {
    fen.split_whitespace().take(4).collect::<Vec<_>>().join(" ")
}

pub fn side_to_move(fen: &str) -> Result<Color, PositionError> {
    Ok(parse_position(fen)?.turn().into())
}

pub fn legal_move_count(fen: &str) -> Result<usize, PositionError> {
    Ok(parse_position(fen)?.legal_moves().len())
}

pub fn legal_uci_moves(fen: &str) -> Result<Vec<String>, PositionError> {
    let pos = parse_position(fen)?;
    Ok(pos
        .legal_moves()
        .iter()
        .map(|m| m.to_uci(CastlingMode::Standard).to_string())
        .collect())
}

pub fn is_legal_uci(fen: &str, uci: &str) -> bool {
    let Ok(pos) = parse_position(fen) else {
        return false;
    };
    UciMove::from_str(uci)
        .ok()
        .and_then(|m| m.to_move(&pos).ok())
        .is_some()
}

/// Standard algebraic notation of `uci` in `fen`, with check suffixes.
pub fn uci_to_san(fen: &str, uci: &str) -> Result<String, PositionError> {
    let pos = parse_position(fen)?;
    let mv = UciMove::from_str(uci)
        .ok()
        .and_then(|m| m.to_move(&pos).ok())
        .ok_or_else(|| PositionError::IllegalMove {
            fen: fen.to_string(),
            uci: uci.to_string(),
        })?;
    Ok(shakmaty::san::SanPlus::from_move(pos, mv).to_string())
}

/// Plays `uci` on `fen` and returns the FEN of the resulting position.
pub fn play_uci(fen: &str, uci: &str) -> Result<String, PositionError> {
    let pos = parse_position(fen)?;
    let illegal = || PositionError::IllegalMove {
        fen: fen.to_string(),
        uci: uci.to_string(),
    };
    let mv = UciMove::from_str(uci)
        .map_err(|_| illegal())?
        .to_move(&pos)
        .map_err(|_| illegal())?;
    let after = pos.play(mv).map_err(|_| illegal())?;
    Ok(to_fen(&after))
}

pub fn terminal_state(fen: &str) -> Result<Option<Terminal>, PositionError> {
    let pos = parse_position(fen)?;
    Ok(if pos.is_checkmate() {
        Some(Terminal::Checkmate)
    } else if pos.is_stalemate() {
        Some(Terminal::Stalemate)
    } else {
        None
    })
}

/// Swaps colors and flips the board vertically.
pub fn mirror_fen(fen: &str) -> Result<String, PositionError> {
    let pos = parse_position(fen)?;
    let mut setup = pos.to_setup(EnPassantMode::Legal);
    setup.mirror();
    let mirrored: Chess = Chess::from_setup(setup, CastlingMode::Standard).map_err(|e| {
        PositionError::IllegalFen {
            fen: fen.to_string(),
            reason: e.to_string(),
        }
    })?;
    Ok(to_fen(&mirrored))
}

/// Mirrors a coordinate move across the horizontal axis (e2e4 -> e7e5).
pub fn mirror_uci(uci: &str) -> String {
    uci.chars()
        .map(|c| match c {
            '1'..='8' => (b'1' + (b'8' - c as u8)) as char,
            other => other,
        })
        .collect()
}
