use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    covariates, delta_family, Covariates, move_performance, pawn_units, standing_centipawns, AdvantageCategory,
    AfterMove, MeasureError,
};
use crate::chess::{is_legal_uci, play_uci, Color, PositionError};
use crate::engine::{CacheKey, EngineConfig, EngineError, EnginePool, EvalCache, EvalResult};
use crate::pgn::{derive_time_features, GameRecord, MoveEvent, TimeFeatureError, TimeFeatures};

/// Super-engine analyses and restricted-engine choices for positions.
pub trait EvaluationSource: Sync {
    /// Multi-line analysis by the super engine.
    fn super_eval(&self, fen: &str) -> Result<EvalResult, EngineError>;
    /// Analysis by the restricted engine; its `bestmove` is the benchmark move.
    fn restricted_eval(&self, fen: &str) -> Result<EvalResult, EngineError>;
    /// Engine tags recorded in the manifest.
    fn engine_tags(&self) -> Vec<String> {
        Vec::new()
    }
}

/// Evaluations served from running engine pools (and their caches).
pub struct PoolEvaluations<'a> {
    pub super_pool: &'a EnginePool,
    pub restricted_pool: &'a EnginePool,
}

impl EvaluationSource for PoolEvaluations<'_> {
    fn super_eval(&self, fen: &str) -> Result<EvalResult, EngineError> {
        self.super_pool.evaluate(fen)
    }

    fn restricted_eval(&self, fen: &str) -> Result<EvalResult, EngineError> {
        self.restricted_pool.evaluate(fen)
    }

    fn engine_tags(&self) -> Vec<String> {
        tags(self.super_pool.config(), self.restricted_pool.config())
    }
}

fn tags(sup: &EngineConfig, res: &EngineConfig) -> Vec<String> {
    vec![
        format!("super:{}:depth{}:multipv{}", sup.engine_tag, sup.depth_limit, sup.multipv),
        format!("restricted:{}:depth{}:multipv{}", res.engine_tag, res.depth_limit, res.multipv),
    ]
}

/// Read-only view of an evaluation cache; absent entries are errors.
pub struct CachedEvaluations {
    pub cache: Arc<EvalCache>,
    pub super_engine: EngineConfig,
    pub restricted_engine: EngineConfig,
}

impl CachedEvaluations {
    fn lookup(&self, cfg: &EngineConfig, fen: &str) -> Result<EvalResult, EngineError> {
        let key = CacheKey::new(fen, &cfg.engine_tag, cfg.depth_limit, cfg.multipv);
        self.cache.get(&key, fen).ok_or_else(|| {
            EngineError::Cache(format!(
                "no {:?} evaluation cached for '{fen}' (run the evaluate stage)",
                cfg.role
            ))
        })
    }
}

impl EvaluationSource for CachedEvaluations {
    fn super_eval(&self, fen: &str) -> Result<EvalResult, EngineError> {
        self.lookup(&self.super_engine, fen)
    }

    fn restricted_eval(&self, fen: &str) -> Result<EvalResult, EngineError> {
        self.lookup(&self.restricted_engine, fen)
    }

    fn engine_tags(&self) -> Vec<String> {
        tags(&self.super_engine, &self.restricted_engine)
    }
}

fn default_min_elo() -> u32 {
    2500
}
fn default_book() -> u32 {
    15
}
fn default_true() -> bool {
    true
}

/// Sample restrictions applied before any row is evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFilter {
    /// Both players must be rated at least this much.
    #[serde(default = "default_min_elo")]
    pub min_elo: u32,
    /// Both players must be rated at most this much.
    #[serde(default)]
    pub max_elo: Option<u32>,
    /// Full moves per player treated as book and excluded.
    #[serde(default = "default_book")]
    pub exclude_first_moves: u32,
    /// Drop configurations whose standing is exactly 0.00.
    #[serde(default)]
    pub drop_zero_eval: bool,
    /// Drop moves without usable clock readings.
    #[serde(default = "default_true")]
    pub require_clocks: bool,
    /// Keep unfinished or adjourned games.
    #[serde(default)]
    pub include_unfinished: bool,
}

impl Default for DatasetFilter {
    fn default() -> Self {
        Self {
            min_elo: default_min_elo(),
            max_elo: None,
            exclude_first_moves: default_book(),
            drop_zero_eval: false,
            require_clocks: true,
            include_unfinished: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GameExclusion {
    Unfinished,
    Rating,
}

impl DatasetFilter {
    fn check_game(&self, game: &GameRecord) -> Result<(), GameExclusion> {
        if !self.include_unfinished && !game.is_ratable() {
            return Err(GameExclusion::Unfinished);
        }
        for p in [&game.white, &game.black] {
            let ok = match p.elo {
                Some(e) => e >= self.min_elo && self.max_elo.is_none_or(|m| e <= m),
                None => self.min_elo == 0 && self.max_elo.is_none(),
            };
            if !ok {
                return Err(GameExclusion::Rating);
            }
        }
        Ok(())
    }
}

/// Whose move is scored as the "human" move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveChoice {
    #[default]
    Human,
    /// Substitute the restricted engine's choice; every delta is then zero.
    Restricted,
    /// Moves drawn by a simulated agent through [`build_dataset_with`].
    Simulated,
}

/// What a chooser sees about a position before the scored move is fixed.
pub struct ChoiceContext<'a> {
    pub game: &'a GameRecord,
    pub mv: &'a MoveEvent,
    pub super_eval: &'a EvalResult,
    pub restricted: &'a str,
    pub covariates: &'a Covariates,
    pub time: Option<&'a TimeFeatures>,
}

/// Picks the move scored as the mover's choice.
pub trait MoveChooser: Sync {
    fn choose(&self, ctx: &ChoiceContext<'_>) -> String;
}

impl MoveChooser for MoveChoice {
    fn choose(&self, ctx: &ChoiceContext<'_>) -> String {
        match self {
            MoveChoice::Human | MoveChoice::Simulated => ctx.mv.uci.clone(),
            MoveChoice::Restricted => ctx.restricted.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub filter: DatasetFilter,
    pub choice: MoveChoice,
    /// Abort when more than this share of evaluated rows fails.
    pub max_failure_share: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            filter: DatasetFilter::default(),
            choice: MoveChoice::Human,
            max_failure_share: 0.10,
        }
    }
}

/// One row of the analysis panel. Pawn-unit values are mover-perspective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveObservation {
    pub game_id: String,
    pub player_id: String,
    pub ply: u32,
    pub full_move: u32,
    pub mover_white: u8,
    pub elo_player: Option<u32>,
    pub elo_opponent: Option<u32>,
    pub elo_player_100: Option<f64>,
    pub elo_diff_100: Option<f64>,
    pub favorite: Option<u8>,
    pub played_uci: String,
    pub restricted_uci: String,
    pub standing_pawnunits: f64,
    pub better_pos: u8,
    pub worse_pos: u8,
    pub better_pawnunits: f64,
    pub worse_pawnunits: f64,
    pub advantage_cat: AdvantageCategory,
    pub remaining_time_hours: Option<f64>,
    pub time_spent_minutes: Option<f64>,
    pub num_previous_moves: u32,
    pub near_time_control: u8,
    pub game_duration_hours: Option<f64>,
    pub opp_remaining_time_hours: Option<f64>,
    pub opp_time_spent_minutes: Option<f64>,
    pub complexity_seconds: f64,
    pub complexity_nodes: u64,
    pub dist_second_best: Option<f64>,
    pub is_best: u8,
    #[serde(rename = "P_human")]
    pub p_human: f64,
    #[serde(rename = "P_restricted")]
    pub p_restricted: f64,
    pub delta: f64,
    #[serde(rename = "delta_E")]
    pub delta_e: u8,
    #[serde(rename = "delta_P")]
    pub delta_p: u8,
    #[serde(rename = "delta_N")]
    pub delta_n: u8,
    #[serde(rename = "delta_C")]
    pub delta_c: i8,
    #[serde(rename = "delta_L")]
    pub delta_l: f64,
}

/// Filter settings and row accounting of one dataset build.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub filter: Option<DatasetFilter>,
    pub choice: MoveChoice,
    pub engine_tags: Vec<String>,
    pub games_total: usize,
    pub games_unfinished: usize,
    pub games_rating_excluded: usize,
    pub games_used: usize,
    pub plies_total: usize,
    pub rows_book_excluded: usize,
    pub rows_missing_clock: usize,
    pub rows_zero_eval_dropped: usize,
    pub rows_attempted: usize,
    pub rows_failed: usize,
    pub rows: usize,
    pub share_delta_zero: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<MoveObservation>,
    pub manifest: DatasetManifest,
}

struct GamePlan<'g> {
    time: Vec<Result<TimeFeatures, TimeFeatureError>>,
    eligible: Vec<&'g MoveEvent>,
    book: usize,
    missing_clock: usize,
}

fn plan_game<'g>(game: &'g GameRecord, filter: &DatasetFilter) -> GamePlan<'g> {
    let time = match derive_time_features(game) {
        Ok(t) => t,
        Err(e) => game.moves.iter().map(|_| Err(e)).collect(),
    };
    let mut plan = GamePlan {
        eligible: Vec::new(),
        book: 0,
        missing_clock: 0,
        time,
    };
    for (i, mv) in game.moves.iter().enumerate() {
        if mv.full_move() <= filter.exclude_first_moves {
            plan.book += 1;
        } else if filter.require_clocks && plan.time[i].is_err() {
            plan.missing_clock += 1;
        } else {
            plan.eligible.push(mv);
        }
    }
    plan
}

/// Moves that enter the panel before any engine-dependent filter.
pub fn eligible_moves<'g>(game: &'g GameRecord, filter: &DatasetFilter) -> Vec<&'g MoveEvent> {
    if filter.check_game(game).is_err() {
        return Vec::new();
    }
    plan_game(game, filter).eligible
}

/// After-move positions the super engine must analyse to score `moves` in
/// `fen`: moves outside the analysed lines that do not end the game.
pub fn required_after_positions(
    super_eval: &EvalResult,
    moves: &[&str],
) -> Result<Vec<String>, PositionError> {
    let mut out = Vec::new();
    for &uci in moves {
        if super_eval.centipawns_of(uci).is_some() {
            continue;
        }
        if AfterMove::terminal_after(&super_eval.fen, uci)?.is_none() {
            let after = play_uci(&super_eval.fen, uci)?;
            if !out.contains(&after) {
                out.push(after);
            }
        }
    }
    Ok(out)
}

fn after_move(
    source: &dyn EvaluationSource,
    super_eval: &EvalResult,
    uci: &str,
) -> Result<Option<AfterMove>, MeasureError> {
    if super_eval.centipawns_of(uci).is_some() {
        return Ok(None);
    }
    if let Some(t) = AfterMove::terminal_after(&super_eval.fen, uci)? {
        return Ok(Some(t));
    }
    let after = play_uci(&super_eval.fen, uci)?;
    Ok(Some(AfterMove::Evaluated(source.super_eval(&after)?)))
}

enum RowOutcome {
    Row(Box<MoveObservation>),
    ZeroEval,
}

fn observe(
    game: &GameRecord,
    mv: &MoveEvent,
    time: &[Result<TimeFeatures, TimeFeatureError>],
    source: &dyn EvaluationSource,
    opts: &BuildOptions,
    chooser: &dyn MoveChooser,
) -> Result<RowOutcome, MeasureError> {
    let fen = &mv.fen_before;
    let super_eval = source.super_eval(fen)?;
    let s = standing_centipawns(&super_eval);
    if opts.filter.drop_zero_eval && s == 0 {
        return Ok(RowOutcome::ZeroEval);
    }
    let restricted = source.restricted_eval(fen)?.bestmove;
    if !is_legal_uci(fen, &restricted) {
        return Err(PositionError::IllegalMove {
            fen: fen.clone(),
            uci: restricted,
        }
        .into());
    }
    let first_control = game.time_control.as_ref().and_then(|tc| tc.first_control());
    let cov = covariates(mv.full_move(), &super_eval, first_control);
    let idx = (mv.ply - 1) as usize;
    let own = time[idx].as_ref().ok();
    let played = chooser.choose(&ChoiceContext {
        game,
        mv,
        super_eval: &super_eval,
        restricted: &restricted,
        covariates: &cov,
        time: own,
    });
    if !is_legal_uci(fen, &played) {
        return Err(PositionError::IllegalMove {
            fen: fen.clone(),
            uci: played,
        }
        .into());
    }
    let after_h = after_move(source, &super_eval, &played)?;
    let after_r = after_move(source, &super_eval, &restricted)?;
    let ph = move_performance(&super_eval, &played, after_h.as_ref())?;
    let pr = move_performance(&super_eval, &restricted, after_r.as_ref())?;
    let d = delta_family(ph.centipawns, pr.centipawns);

    let opp_reply = time.get(idx + 1).and_then(|t| t.as_ref().ok());
    let opp_prev = idx.checked_sub(1).and_then(|j| time[j].as_ref().ok());
    let game_duration_hours = time[..idx]
        .iter()
        .map(|t| t.as_ref().ok().map(|f| f.time_spent_minutes))
        .sum::<Option<f64>>()
        .map(|m| m / 60.0);

    let me = game.player(mv.mover);
    let opp = game.player(mv.mover.other());
    let elo_pair = me.elo.zip(opp.elo);
    Ok(RowOutcome::Row(Box::new(MoveObservation {
        game_id: game.game_id.clone(),
        player_id: me.name.clone(),
        ply: mv.ply,
        full_move: mv.full_move(),
        mover_white: u8::from(mv.mover == Color::White),
        elo_player: me.elo,
        elo_opponent: opp.elo,
        elo_player_100: me.elo.map(|e| f64::from(e) / 100.0),
        elo_diff_100: elo_pair.map(|(a, b)| (f64::from(a) - f64::from(b)) / 100.0),
        favorite: elo_pair.map(|(a, b)| u8::from(a > b)),
        played_uci: played,
        restricted_uci: restricted,
        standing_pawnunits: pawn_units(s),
        better_pos: cov.better_pos,
        worse_pos: cov.worse_pos,
        better_pawnunits: cov.better_pawnunits,
        worse_pawnunits: cov.worse_pawnunits,
        advantage_cat: cov.advantage_cat,
        remaining_time_hours: own.map(|t| t.remaining_time_hours),
        time_spent_minutes: own.map(|t| t.time_spent_minutes),
        num_previous_moves: cov.num_previous_moves,
        near_time_control: cov.near_time_control,
        game_duration_hours,
        opp_remaining_time_hours: opp_reply.map(|t| t.remaining_time_hours),
        opp_time_spent_minutes: opp_prev.map(|t| t.time_spent_minutes),
        complexity_seconds: cov.complexity_seconds,
        complexity_nodes: cov.complexity_nodes,
        dist_second_best: cov.dist_second_best,
        is_best: u8::from(ph.is_best),
        p_human: ph.pawn_units(),
        p_restricted: pr.pawn_units(),
        delta: d.delta,
        delta_e: d.delta_e,
        delta_p: d.delta_p,
        delta_n: d.delta_n,
        delta_c: d.delta_c,
        delta_l: d.delta_l,
    })))
}

/// Builds the panel for `games`. Rows that fail are skipped and logged; the
/// build aborts when failures exceed `opts.max_failure_share` of the rows
/// attempted. Output is sorted by (game_id, ply).
pub fn build_dataset(
    games: &[GameRecord],
    source: &dyn EvaluationSource,
    opts: &BuildOptions,
) -> Result<Dataset, MeasureError> {
    build_dataset_with(games, source, opts, &opts.choice)
}

/// [`build_dataset`] with the scored move picked by `chooser`.
pub fn build_dataset_with(
    games: &[GameRecord],
    source: &dyn EvaluationSource,
    opts: &BuildOptions,
    chooser: &dyn MoveChooser,
) -> Result<Dataset, MeasureError> {
    let filter = &opts.filter;
    let mut m = DatasetManifest {
        filter: Some(filter.clone()),
        choice: opts.choice,
        engine_tags: source.engine_tags(),
        games_total: games.len(),
        ..Default::default()
    };
    let mut rows = Vec::new();
    for game in games {
        m.plies_total += game.moves.len();
        match filter.check_game(game) {
            Err(GameExclusion::Unfinished) => {
                m.games_unfinished += 1;
                continue;
            }
            Err(GameExclusion::Rating) => {
                m.games_rating_excluded += 1;
                continue;
            }
            Ok(()) => m.games_used += 1,
        }
        let plan = plan_game(game, filter);
        m.rows_book_excluded += plan.book;
        m.rows_missing_clock += plan.missing_clock;
        for mv in plan.eligible {
            m.rows_attempted += 1;
            match observe(game, mv, &plan.time, source, opts, chooser) {
                Ok(RowOutcome::Row(r)) => rows.push(*r),
                Ok(RowOutcome::ZeroEval) => m.rows_zero_eval_dropped += 1,
                Err(e) => {
                    log::warn!("game {} ply {}: {e}", game.game_id, mv.ply);
                    m.rows_failed += 1;
                }
            }
        }
    }
    if m.rows_attempted > 0
        && m.rows_failed as f64 > opts.max_failure_share * m.rows_attempted as f64
    {
        return Err(MeasureError::TooManyFailures {
            failed: m.rows_failed,
            attempted: m.rows_attempted,
        });
    }
    rows.sort_by(|a, b| (&a.game_id, a.ply).cmp(&(&b.game_id, b.ply)));
    m.rows = rows.len();
    m.share_delta_zero = (!rows.is_empty())
        .then(|| rows.iter().filter(|r| r.delta_e == 0).count() as f64 / rows.len() as f64);
    Ok(Dataset { rows, manifest: m })
}

/// Writes rows as CSV with a header; missing values are empty cells.
pub fn write_dataset<W: Write>(out: W, rows: &[MoveObservation]) -> Result<(), MeasureError> {
    let io = |e: csv::Error| MeasureError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(dataset_columns()).map_err(io)?;
    }
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| MeasureError::Io(e.to_string()))
}

pub fn read_dataset<R: Read>(input: R) -> Result<Vec<MoveObservation>, MeasureError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<Vec<MoveObservation>, _>>()
        .map_err(|e| MeasureError::Io(e.to_string()))
}

/// Header of the dataset file.
pub fn dataset_columns() -> Vec<&'static str> {
    vec![
        "game_id", "player_id", "ply", "full_move", "mover_white", "elo_player", "elo_opponent",
        "elo_player_100", "elo_diff_100", "favorite", "played_uci", "restricted_uci",
        "standing_pawnunits", "better_pos", "worse_pos", "better_pawnunits", "worse_pawnunits",
        "advantage_cat", "remaining_time_hours", "time_spent_minutes", "num_previous_moves",
        "near_time_control", "game_duration_hours", "opp_remaining_time_hours",
        "opp_time_spent_minutes", "complexity_seconds", "complexity_nodes", "dist_second_best",
        "is_best", "P_human", "P_restricted", "delta", "delta_E", "delta_P", "delta_N", "delta_C",
        "delta_L",
    ]
}
