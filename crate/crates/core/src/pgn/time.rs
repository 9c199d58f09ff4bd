use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::GameRecord;
use crate::chess::Color;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeFeatures {
    pub ply: u32,
    pub remaining_time_hours: f64,
    pub time_spent_minutes: f64,
    /// The raw clock difference was negative and has been floored at zero.
    pub clock_anomaly: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TimeFeatureError {
    #[error("no clock comment at ply {0}")]
    MissingClock(u32),
    #[error("game has no known time control")]
    MissingTimeControl,
}

/// Per-ply remaining time and time spent, indexed by `ply - 1`.
///
/// Time spent on full move `k` is the mover's previous clock minus the
/// current clock, plus the increment and any time credited at move `k`.
/// The first move of each player starts from the base time.
pub fn derive_time_features(
    game: &GameRecord,
) -> Result<Vec<Result<TimeFeatures, TimeFeatureError>>, TimeFeatureError> {
    let tc = game
        .time_control
        .as_ref()
        .ok_or(TimeFeatureError::MissingTimeControl)?;
    // last known clock per color
    let mut previous: [Result<i64, TimeFeatureError>; 2] =
        [Ok(tc.base_seconds as i64), Ok(tc.base_seconds as i64)];
    let slot = |c: Color| match c {
        Color::White => 0,
        Color::Black => 1,
    };

    let mut out = Vec::with_capacity(game.moves.len());
    for mv in &game.moves {
        let idx = slot(mv.mover);
        let Some(clock) = mv.clock_after else {
            previous[idx] = Err(TimeFeatureError::MissingClock(mv.ply));
            out.push(Err(TimeFeatureError::MissingClock(mv.ply)));
            continue;
        };
        let prev = std::mem::replace(&mut previous[idx], Ok(clock as i64));
        out.push(prev.map(|prev| {
            let raw = prev - clock as i64
                + tc.increment_seconds as i64
                + tc.addition_at(mv.full_move()) as i64;
            TimeFeatures {
                ply: mv.ply,
                remaining_time_hours: clock as f64 / 3600.0,
                time_spent_minutes: raw.max(0) as f64 / 60.0,
                clock_anomaly: raw < 0,
            }
        }));
    }
    Ok(out)
}
