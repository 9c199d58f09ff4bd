//! Move-level performance measures and the analysis panel.
//!
//! All performance arithmetic runs on integer centipawns from the mover's
//! perspective; pawn-unit reals are derived views. Equality of two
//! performances therefore means equality of integers.

mod dataset;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chess::{play_uci, terminal_state, Color, PositionError, Terminal};
use crate::engine::{score_to_pawn_units, EngineError, EvalResult, MATE_CENTIPAWNS};

pub use dataset::{
    build_dataset, build_dataset_with, dataset_columns, eligible_moves, read_dataset,
    required_after_positions, write_dataset, BuildOptions, CachedEvaluations, ChoiceContext,
    Dataset, DatasetFilter, DatasetManifest, EvaluationSource, MoveChoice, MoveChooser,
    MoveObservation, PoolEvaluations,
};

/// Centipawns to pawn units.
pub fn pawn_units(centipawns: i32) -> f64 {
    f64::from(centipawns) / 100.0
}

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("move {uci} is outside the analysed lines of '{fen}' and no after-move evaluation is available")]
    MissingAfterEval { fen: String, uci: String },
    #[error(transparent)]
    Position(#[from] PositionError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{failed} of {attempted} rows failed, above the 10% abort threshold")]
    TooManyFailures { failed: usize, attempted: usize },
    #[error("dataset file: {0}")]
    Io(String),
}

/// Outcome of a move as seen by the super engine.
#[derive(Debug, Clone, PartialEq)]
pub enum AfterMove {
    /// Super-engine analysis of the position after the move (opponent to move).
    Evaluated(EvalResult),
    /// The move ended the game; the value is the mover's score.
    Terminal { mover_centipawns: i32 },
}

impl AfterMove {
    /// Standing after the move, from the perspective of the player who made it.
    pub fn mover_centipawns(&self) -> i32 {
        match self {
            AfterMove::Evaluated(e) => -e.best_centipawns(),
            AfterMove::Terminal { mover_centipawns } => *mover_centipawns,
        }
    }

    /// Recognizes mate and stalemate after `uci` without consulting an engine.
    pub fn terminal_after(fen: &str, uci: &str) -> Result<Option<AfterMove>, PositionError> {
        let after = play_uci(fen, uci)?;
        Ok(terminal_state(&after)?.map(|t| AfterMove::Terminal {
            mover_centipawns: match t {
                Terminal::Checkmate => MATE_CENTIPAWNS,
                Terminal::Stalemate => 0,
            },
        }))
    }
}

/// Everything needed to score the human move and the restricted benchmark
/// in one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkPair {
    pub fen: String,
    pub super_eval: EvalResult,
    pub restricted_move: String,
    pub eval_after_human: Option<AfterMove>,
    pub eval_after_restricted: Option<AfterMove>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Performance {
    pub is_best: bool,
    /// Mover-perspective centipawns relative to the best line, usually ≤ 0.
    pub centipawns: i32,
}

impl Performance {
    pub fn pawn_units(self) -> f64 {
        pawn_units(self.centipawns)
    }
}

/// Mover-perspective standing in pawn units from the best line of a
/// super-engine analysis of the position with `mover` to move.
pub fn standing(super_eval: &EvalResult, mover: Color) -> f64 {
    let white = score_to_pawn_units(super_eval.best().score, mover);
    pawn_units(white * mover.sign())
}

/// Integer form of [`standing`].
pub fn standing_centipawns(super_eval: &EvalResult) -> i32 {
    super_eval.best_centipawns()
}

/// Scores `uci` against the best line: the line difference when `uci` is
/// among the analysed lines, else the after-move standing minus the best.
pub fn move_performance(
    super_eval: &EvalResult,
    uci: &str,
    after: Option<&AfterMove>,
) -> Result<Performance, MeasureError> {
    let best = super_eval.best_centipawns();
    let own = match super_eval.centipawns_of(uci) {
        Some(cp) => cp,
        None => after
            .ok_or_else(|| MeasureError::MissingAfterEval {
                fen: super_eval.fen.clone(),
                uci: uci.to_string(),
            })?
            .mover_centipawns(),
    };
    let centipawns = own - best;
    Ok(Performance {
        is_best: centipawns == 0,
        centipawns,
    })
}

pub fn human_performance(pair: &BenchmarkPair, played_uci: &str) -> Result<Performance, MeasureError> {
    move_performance(&pair.super_eval, played_uci, pair.eval_after_human.as_ref())
}

pub fn restricted_performance(pair: &BenchmarkPair) -> Result<Performance, MeasureError> {
    move_performance(
        &pair.super_eval,
        &pair.restricted_move,
        pair.eval_after_restricted.as_ref(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaFamily {
    pub delta_centipawns: i32,
    pub delta: f64,
    pub delta_e: u8,
    pub delta_p: u8,
    pub delta_n: u8,
    pub delta_c: i8,
    pub delta_l: f64,
}

/// Signed log-modulus `sgn(x)·ln(1+|x|)`.
pub fn log_modulus(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

pub fn delta_family(p_human_cp: i32, p_restricted_cp: i32) -> DeltaFamily {
    let d = p_human_cp - p_restricted_cp;
    let delta = pawn_units(d);
    DeltaFamily {
        delta_centipawns: d,
        delta,
        delta_e: u8::from(d != 0),
        delta_p: u8::from(d > 0),
        delta_n: u8::from(d < 0),
        delta_c: d.signum() as i8,
        delta_l: log_modulus(delta),
    }
}

/// Seven-way classification of the mover's standing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageCategory {
    Equal,
    SlightAdvantage,
    ClearAdvantage,
    DecisiveAdvantage,
    SlightDisadvantage,
    ClearDisadvantage,
    DecisiveDisadvantage,
}

impl AdvantageCategory {
    /// Boundaries at 0.3, 0.7 and 1.6 pawn units; each boundary belongs to
    /// the larger category.
    pub fn from_centipawns(cp: i32) -> Self {
        use AdvantageCategory::*;
        let a = cp.unsigned_abs();
        match (cp > 0, a) {
            (_, 0..=29) => Equal,
            (true, 30..=69) => SlightAdvantage,
            (true, 70..=159) => ClearAdvantage,
            (true, _) => DecisiveAdvantage,
            (false, 30..=69) => SlightDisadvantage,
            (false, 70..=159) => ClearDisadvantage,
            (false, _) => DecisiveDisadvantage,
        }
    }

    pub fn as_str(self) -> &'static str {
        use AdvantageCategory::*;
        match self {
            Equal => "equal",
            SlightAdvantage => "slight_advantage",
            ClearAdvantage => "clear_advantage",
            DecisiveAdvantage => "decisive_advantage",
            SlightDisadvantage => "slight_disadvantage",
            ClearDisadvantage => "clear_disadvantage",
            DecisiveDisadvantage => "decisive_disadvantage",
        }
    }
}

/// Position, time and complexity covariates of one move.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    pub better_pos: u8,
    pub worse_pos: u8,
    pub better_pawnunits: f64,
    pub worse_pawnunits: f64,
    pub advantage_cat: AdvantageCategory,
    pub num_previous_moves: u32,
    pub near_time_control: u8,
    pub complexity_seconds: f64,
    pub complexity_nodes: u64,
    pub dist_second_best: Option<f64>,
}

/// Covariates that depend only on the standing, the analysis and the move
/// number. `first_control` is the move at which the first time addition
/// applies, if any.
pub fn covariates(
    full_move: u32,
    super_eval: &EvalResult,
    first_control: Option<u32>,
) -> Covariates {
    let s = standing_centipawns(super_eval);
    let near = first_control.is_some_and(|at| full_move <= at && full_move + 10 > at);
    let dist_second_best = super_eval
        .lines
        .get(1)
        .map(|l| pawn_units(l.score.mover_centipawns() - s));
    Covariates {
        better_pos: u8::from(s > 50),
        worse_pos: u8::from(s < -50),
        better_pawnunits: pawn_units(s.max(0)),
        worse_pawnunits: pawn_units((-s).max(0)),
        advantage_cat: AdvantageCategory::from_centipawns(s),
        num_previous_moves: full_move.saturating_sub(1),
        near_time_control: u8::from(near),
        complexity_seconds: super_eval.elapsed_seconds,
        complexity_nodes: super_eval.nodes,
        dist_second_best,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{PvLine, Score};
    use proptest::prelude::*;

    fn eval(fen: &str, lines: &[(&str, i32)]) -> EvalResult {
        EvalResult {
            fen: fen.into(),
            engine_tag: "stub".into(),
            depth: 21,
            lines: lines
                .iter()
                .map(|(u, cp)| PvLine {
                    uci: (*u).into(),
                    score: Score::cp(*cp),
                })
                .collect(),
            bestmove: lines[0].0.into(),
            nodes: 1000,
            elapsed_seconds: 3.87,
        }
    }

    const BLACK_TO_MOVE: &str = "r1b1kbnr/pppp1ppp/2n5/4p3/4P3/5N2/PPPP1PPP/RNBQKB1R b KQkq - 3 3";

    #[test]
    fn standing_is_mover_relative() {
        // +0.95 for White reported with Black to move is −95 for the mover
        let e = eval(BLACK_TO_MOVE, &[("c6b4", -95)]);
        assert!((standing(&e, Color::Black) + 0.95).abs() < 1e-12);
        let e = eval(BLACK_TO_MOVE, &[("c6b4", 100)]);
        assert!((standing(&e, Color::Black) - 1.0).abs() < 1e-12);
        let e = eval(BLACK_TO_MOVE, &[("c6b4", 0)]);
        assert_eq!(standing(&e, Color::Black), 0.0);
        assert_eq!(standing(&e, Color::White), 0.0);
    }

    #[test]
    fn worked_example_minus_019() {
        let super_eval = eval(BLACK_TO_MOVE, &[("c6b4", -95), ("c6d4", -120)]);
        // after the played move White is to move and stands at +1.14
        let after = eval("after", &[("e1e2", 114)]);
        let pair = BenchmarkPair {
            fen: BLACK_TO_MOVE.into(),
            super_eval,
            restricted_move: "c6b4".into(),
            eval_after_human: Some(AfterMove::Evaluated(after)),
            eval_after_restricted: None,
        };
        let p = human_performance(&pair, "d8h4").unwrap();
        assert_eq!(p.centipawns, -19);
        assert!(!p.is_best);
        assert_eq!(p.pawn_units(), -0.19);
        assert_eq!(restricted_performance(&pair).unwrap().centipawns, 0);
    }

    #[test]
    fn top_line_and_ties_are_best() {
        let e = eval(BLACK_TO_MOVE, &[("a", 12), ("b", 12), ("c", 5)]);
        for m in ["a", "b"] {
            let p = move_performance(&e, m, None).unwrap();
            assert_eq!((p.is_best, p.centipawns), (true, 0));
        }
        assert!(!move_performance(&e, "c", None).unwrap().is_best);
    }

    #[test]
    fn third_ranked_move_re_ranked_by_brute_force() {
        let lines = [("a", 5), ("b", 0), ("c", -10), ("d", -30), ("e", -31), ("f", -80)];
        let e = eval(BLACK_TO_MOVE, &lines);
        let best = lines.iter().map(|l| l.1).max().unwrap();
        let played = lines.iter().find(|l| l.0 == "c").unwrap().1;
        let p = move_performance(&e, "c", None).unwrap();
        assert_eq!(p.centipawns, played - best);
        assert_eq!(p.pawn_units(), -0.15);
        assert!(!p.is_best);
    }

    #[test]
    fn restricted_benchmark_cases() {
        let e = eval(BLACK_TO_MOVE, &[("a", -5), ("b", -13), ("c", -40)]);
        let mut pair = BenchmarkPair {
            fen: BLACK_TO_MOVE.into(),
            super_eval: e,
            restricted_move: "a".into(),
            eval_after_human: None,
            eval_after_restricted: None,
        };
        assert_eq!(restricted_performance(&pair).unwrap().centipawns, 0);
        pair.restricted_move = "b".into();
        assert_eq!(restricted_performance(&pair).unwrap().pawn_units(), -0.08);
        pair.restricted_move = "z".into();
        assert!(matches!(
            restricted_performance(&pair),
            Err(MeasureError::MissingAfterEval { .. })
        ));
        // opponent to move at +0.30 means the mover stands at −0.30
        pair.eval_after_restricted = Some(AfterMove::Evaluated(eval("after", &[("x", 30)])));
        assert_eq!(restricted_performance(&pair).unwrap().pawn_units(), -0.25);
    }

    #[test]
    fn terminal_moves_are_scored_without_engine() {
        let fen = "6k1/5ppp/8/8/8/8/8/R5K1 w - - 0 1";
        let mate = AfterMove::terminal_after(fen, "a1a8").unwrap().unwrap();
        assert_eq!(mate.mover_centipawns(), MATE_CENTIPAWNS);
        assert!(AfterMove::terminal_after(fen, "a1a7").unwrap().is_none());
        let stale = "7k/8/6Q1/8/8/8/8/K7 w - - 0 1";
        let s = AfterMove::terminal_after(stale, "g6f7").unwrap().unwrap();
        assert_eq!(s.mover_centipawns(), 0);
    }

    #[test]
    fn delta_family_cases() {
        let f = delta_family(-19, -19);
        assert_eq!((f.delta, f.delta_e, f.delta_p, f.delta_n, f.delta_c, f.delta_l), (0.0, 0, 0, 0, 0, 0.0));
        let f = delta_family(0, -50);
        assert_eq!((f.delta, f.delta_e, f.delta_p, f.delta_n, f.delta_c), (0.5, 1, 1, 0, 1));
        assert!((f.delta_l - 1.5f64.ln()).abs() < 1e-12);
        assert!((f.delta_l - 0.4055).abs() < 1e-4);
        let f = delta_family(-100, 0);
        assert_eq!((f.delta, f.delta_e, f.delta_p, f.delta_n, f.delta_c), (-1.0, 1, 0, 1, -1));
        assert!((f.delta_l + 2f64.ln()).abs() < 1e-12);
        assert!((log_modulus(1.0) - 0.693147).abs() < 1e-6);
    }

    #[test]
    fn advantage_bins() {
        use AdvantageCategory::*;
        let cases = [
            (0, Equal), (29, Equal), (-29, Equal), (30, SlightAdvantage), (60, SlightAdvantage),
            (69, SlightAdvantage), (70, ClearAdvantage), (159, ClearAdvantage),
            (160, DecisiveAdvantage), (32_700, DecisiveAdvantage), (-30, SlightDisadvantage),
            (-70, ClearDisadvantage), (-160, DecisiveDisadvantage),
        ];
        for (cp, cat) in cases {
            assert_eq!(AdvantageCategory::from_centipawns(cp), cat, "{cp}");
        }
    }

    #[test]
    fn covariate_block() {
        let e = eval(BLACK_TO_MOVE, &[("a", 60), ("b", 10)]);
        let c = covariates(20, &e, Some(40));
        assert_eq!((c.better_pos, c.worse_pos), (1, 0));
        assert_eq!(c.advantage_cat, AdvantageCategory::SlightAdvantage);
        assert_eq!(c.num_previous_moves, 19);
        assert_eq!(c.near_time_control, 0);
        assert_eq!(c.dist_second_best, Some(-0.5));
        assert_eq!(c.complexity_nodes, 1000);

        let e = eval(BLACK_TO_MOVE, &[("a", 20), ("b", -15)]);
        assert_eq!(covariates(31, &e, Some(40)).dist_second_best, Some(-0.35));
        assert_eq!(covariates(31, &e, Some(40)).near_time_control, 1);
        assert_eq!(covariates(40, &e, Some(40)).near_time_control, 1);
        assert_eq!(covariates(30, &e, Some(40)).near_time_control, 0);
        assert_eq!(covariates(41, &e, Some(40)).near_time_control, 0);
        assert_eq!(covariates(35, &e, None).near_time_control, 0);

        let e = eval(BLACK_TO_MOVE, &[("a", 0)]);
        let c = covariates(16, &e, None);
        assert_eq!((c.better_pos, c.worse_pos, c.advantage_cat), (0, 0, AdvantageCategory::Equal));
        assert_eq!(c.dist_second_best, None);
    }

    proptest! {
        #[test]
        fn delta_identities(h in -40_000i32..40_000, r in -40_000i32..40_000) {
            let f = delta_family(h, r);
            prop_assert_eq!(f.delta_p + f.delta_n, f.delta_e);
            prop_assert_eq!(i16::from(f.delta_c), i16::from(f.delta_p) - i16::from(f.delta_n));
            prop_assert_eq!(f.delta_e == 1, f.delta != 0.0);
            let g = delta_family(r, h);
            prop_assert_eq!(g.delta_l, -f.delta_l);
        }

        #[test]
        fn log_modulus_monotone(a in -500.0f64..500.0, b in -500.0f64..500.0) {
            if a < b {
                prop_assert!(log_modulus(a) < log_modulus(b));
            }
            prop_assert_eq!(log_modulus(-a), -log_modulus(a));
        }

        #[test]
        fn dummies_exclusive(cp in -40_000i32..40_000) {
            let e = eval(BLACK_TO_MOVE, &[("a", cp)]);
            let c = covariates(20, &e, None);
            prop_assert_eq!(c.better_pos * c.worse_pos, 0);
        }

        /// Mirroring the board and colors keeps the mover's score, so the
        /// white-perspective standing flips and |P| is unchanged.
        #[test]
        fn color_antisymmetry(best in -3000i32..3000, gap in 0i32..500) {
            use crate::chess::{mirror_fen, mirror_uci, START_FEN};
            let fen = START_FEN;
            let e = eval(fen, &[("e2e4", best), ("d2d4", best - gap)]);
            let m = eval(&mirror_fen(fen).unwrap(), &[
                (&mirror_uci("e2e4"), best),
                (&mirror_uci("d2d4"), best - gap),
            ]);
            let white = score_to_pawn_units(e.best().score, Color::White);
            let mirrored_white = score_to_pawn_units(m.best().score, Color::Black);
            prop_assert_eq!(white, -mirrored_white);
            let p = move_performance(&e, "d2d4", None).unwrap();
            let q = move_performance(&m, &mirror_uci("d2d4"), None).unwrap();
            prop_assert_eq!(p.centipawns.abs(), q.centipawns.abs());
        }
    }
}
