//! PGN ingestion: game records with clock annotations and per-move time
//! features.

mod parser;
mod time;
mod writer;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chess::Color;

pub use parser::{parse_pgn, parse_pgn_with, Diagnostic, PgnParse};
pub use time::{derive_time_features, TimeFeatureError, TimeFeatures};
pub use writer::{format_clock, write_pgn};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerInfo {
    pub name: String,
    /// `None` when the header carries no usable rating.
    pub elo: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GameResult {
    WhiteWin,
    Draw,
    BlackWin,
    Unfinished,
}

impl GameResult {
    pub fn as_pgn(self) -> &'static str {
        match self {
            GameResult::WhiteWin => "1-0",
            GameResult::Draw => "1/2-1/2",
            GameResult::BlackWin => "0-1",
            GameResult::Unfinished => "*",
        }
    }

    pub fn from_pgn(s: &str) -> Option<GameResult> {
        match s.trim() {
            "1-0" => Some(GameResult::WhiteWin),
            "1/2-1/2" | "½-½" => Some(GameResult::Draw),
            "0-1" => Some(GameResult::BlackWin),
            "*" => Some(GameResult::Unfinished),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeAddition {
    /// Full-move number after which the time is credited.
    pub at_move: u32,
    pub added_seconds: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeControlSpec {
    pub base_seconds: u32,
    pub increment_seconds: u32,
    /// Sorted by `at_move`.
    pub additions: Vec<TimeAddition>,
}

impl TimeControlSpec {
    pub fn new(base_seconds: u32, increment_seconds: u32, mut additions: Vec<TimeAddition>) -> Self {
        additions.sort_by_key(|a| a.at_move);
        Self {
            base_seconds,
            increment_seconds,
            additions,
        }
    }

    /// Seconds credited to a player on completing full move `full_move`.
    pub fn addition_at(&self, full_move: u32) -> u32 {
        self.additions
            .iter()
            .filter(|a| a.at_move == full_move)
            .map(|a| a.added_seconds)
            .sum()
    }

    pub fn first_control(&self) -> Option<u32> {
        self.additions.first().map(|a| a.at_move)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unrecognized time control '{0}'")]
pub struct TimeControlParseError(pub String);

/// Accepts the PGN `TimeControl` tag forms `5400+30`, `40/5400+30:1800+30`
/// and `40/7200:3600`. The increment of the first period applies throughout.
impl FromStr for TimeControlSpec {
    type Err = TimeControlParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || TimeControlParseError(s.to_string());
        let s = s.trim();
        if s.is_empty() || s == "?" || s == "-" {
            return Err(err());
        }
        let mut base = None;
        let mut increment = 0;
        let mut additions = Vec::new();
        let mut moves_so_far = 0u32;
        for (i, period) in s.split(':').enumerate() {
            let (moves, rest) = match period.split_once('/') {
                Some((m, r)) => (Some(m.parse::<u32>().map_err(|_| err())?), r),
                None => (None, period),
            };
            let (secs, inc) = match rest.split_once('+') {
                Some((a, b)) => (
                    a.parse::<u32>().map_err(|_| err())?,
                    b.parse::<u32>().map_err(|_| err())?,
                ),
                None => (rest.parse::<u32>().map_err(|_| err())?, 0),
            };
            if i == 0 {
                base = Some(secs);
                increment = inc;
            } else {
                additions.push(TimeAddition {
                    at_move: moves_so_far,
                    added_seconds: secs,
                });
            }
            match moves {
                Some(m) => moves_so_far += m,
                // a sudden-death period ends the schedule
                None => break,
            }
        }
        Ok(TimeControlSpec::new(base.ok_or_else(err)?, increment, additions))
    }
}

impl fmt::Display for TimeControlSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut prev = 0;
        for i in 0..=self.additions.len() {
            if i > 0 {
                f.write_str(":")?;
            }
            if let Some(next) = self.additions.get(i) {
                write!(f, "{}/", next.at_move - prev)?;
                prev = next.at_move;
            }
            let secs = match i {
                0 => self.base_seconds,
                _ => self.additions[i - 1].added_seconds,
            };
            write!(f, "{secs}")?;
            if self.increment_seconds > 0 {
                write!(f, "+{}", self.increment_seconds)?;
            }
        }
        Ok(())
    }
}

/// Fallback time controls keyed by event name, for archives whose headers
/// omit or garble the `TimeControl` tag.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeControlDefaults {
    pub by_event: BTreeMap<String, TimeControlSpec>,
    pub fallback: Option<TimeControlSpec>,
}

impl TimeControlDefaults {
    pub fn lookup(&self, event: &str) -> Option<&TimeControlSpec> {
        self.by_event.get(event).or(self.fallback.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveEvent {
    /// 1-based half-move index.
    pub ply: u32,
    pub mover: Color,
    pub san: String,
    pub uci: String,
    pub fen_before: String,
    /// Seconds on the mover's clock after the move, from a `%clk` comment.
    pub clock_after: Option<u32>,
}

impl MoveEvent {
    pub fn full_move(&self) -> u32 {
        self.ply.div_ceil(2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub game_id: String,
    pub event: String,
    pub site: String,
    pub date: String,
    pub round: String,
    pub white: PlayerInfo,
    pub black: PlayerInfo,
    pub result: GameResult,
    pub time_control: Option<TimeControlSpec>,
    pub moves: Vec<MoveEvent>,
}

impl GameRecord {
    pub fn player(&self, color: Color) -> &PlayerInfo {
        match color {
            Color::White => &self.white,
            Color::Black => &self.black,
        }
    }

    /// Unfinished or adjourned games are kept but excluded from rated samples.
    pub fn is_ratable(&self) -> bool {
        self.result != GameResult::Unfinished
    }
}

/// Stable identifier over (event, date, round, white, black).
pub fn game_id(event: &str, date: &str, round: &str, white: &str, black: &str) -> String {
    let mut hasher = Sha256::new();
    for part in [event, date, round, white, black] {
        hasher.update(part.as_bytes());
        hasher.update([0x1f]);
    }
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
