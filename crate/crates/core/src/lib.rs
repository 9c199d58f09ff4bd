//! Engine-scored chess moves and fixed-effects analysis of their deviations.
//!
//! Recorded moves are scored against a deep "super" engine and compared with
//! the choice of a depth-restricted engine. The resulting deviation measures
//! feed fixed-effects panel regressions with game-clustered inference.

pub mod chess;
pub mod pgn;
pub mod engine;
pub mod measures;
pub mod econometrics;
pub mod pipeline;
pub mod simulator;
