//! Synthetic move panels with known deviation behaviour.
//!
//! An [`AgentSpec`] fixes the deviation probability π(x) and the signed
//! size of deviations. [`simulate_panel`] injects deviations as performance
//! gaps on top of restricted-engine performance; [`simulate_move_level`]
//! instead plays an alternative engine line through the measures pipeline.
//! [`validate_identification`] re-estimates the margins on many seeded
//! replications and compares them with the designed values.

mod validate;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{
    build_dataset_with, delta_family, AdvantageCategory, BuildOptions, ChoiceContext, Dataset,
    EvaluationSource, MeasureError, MoveChoice, MoveChooser, MoveObservation,
};
use crate::pgn::GameRecord;

pub use validate::{identities_hold, validate_identification, MarginSummary, ValidationReport};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid agent: {0}")]
    InvalidAgent(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("covariate '{0}' is not available to the agent")]
    UnknownCovariate(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Econ(#[from] crate::econometrics::EconError),
}

/// Non-deviating behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasePolicy {
    /// Play exactly what the restricted engine plays.
    #[default]
    RestrictedEngine,
    /// As above, with independent Gaussian noise on the restricted engine's
    /// own performance (it leaves deltas unchanged).
    NoisyRestricted,
}

/// `intercept + Σ coefficients[c] · x_c`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearIndex {
    pub intercept: f64,
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
}

impl LinearIndex {
    pub fn constant(c: f64) -> Self {
        Self {
            intercept: c,
            coefficients: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &str, coef: f64) -> Self {
        *self.coefficients.entry(name.to_string()).or_default() += coef;
        self
    }

    pub fn eval(&self, value: &dyn Fn(&str) -> Option<f64>) -> Result<f64, SimError> {
        let mut v = self.intercept;
        for (name, c) in &self.coefficients {
            let x = value(name).ok_or_else(|| SimError::UnknownCovariate(name.clone()))?;
            v += c * x;
        }
        Ok(v)
    }
}

/// Signed deviation size in pawn units: positive with probability
/// `positive_share`, magnitude exponential with mean `scale(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationDraw {
    pub positive_share: f64,
    pub scale: LinearIndex,
}

impl DeviationDraw {
    /// `E[D | deviation, x] = (2q − 1) · scale(x)`.
    pub fn conditional_mean(&self, scale: f64) -> f64 {
        (2.0 * self.positive_share - 1.0) * scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: String,
    #[serde(default)]
    pub base_policy: BasePolicy,
    /// Linear probability of deviating, clamped to [0, 1].
    pub deviation_prob: LinearIndex,
    pub deviation_draw: DeviationDraw,
    /// Standard deviation of the noise under [`BasePolicy::NoisyRestricted`].
    #[serde(default)]
    pub noise_sd: f64,
}

/// Smallest magnitude scale an agent may produce, in pawn units.
pub const MIN_SCALE: f64 = 0.01;

impl AgentSpec {
    /// Never deviates.
    pub fn restricted() -> Self {
        Self::preset("restricted", LinearIndex::constant(0.0), 0.5, LinearIndex::constant(0.5))
    }

    /// Deviates at a constant rate with symmetric sizes: no covariate matters.
    pub fn null() -> Self {
        Self::preset("null", LinearIndex::constant(0.4), 0.5, LinearIndex::constant(0.5))
    }

    /// Deviates half the time, symmetric sizes.
    pub fn constant() -> Self {
        Self::preset("constant", LinearIndex::constant(0.5), 0.5, LinearIndex::constant(0.5))
    }

    /// Deviation probability rises by 0.2 in better positions; sizes fixed.
    pub fn extensive() -> Self {
        Self::preset(
            "extensive",
            LinearIndex::constant(0.3).with("better_pos", 0.2),
            0.3,
            LinearIndex::constant(0.5),
        )
    }

    /// Constant deviation probability; mostly harmful deviations that are
    /// larger in better positions.
    pub fn intensive() -> Self {
        Self::preset(
            "intensive",
            LinearIndex::constant(0.4),
            0.25,
            LinearIndex::constant(0.3).with("better_pos", 0.6),
        )
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "restricted" => Some(Self::restricted()),
            "null" => Some(Self::null()),
            "constant" => Some(Self::constant()),
            "extensive" => Some(Self::extensive()),
            "intensive" => Some(Self::intensive()),
            _ => None,
        }
    }

    fn preset(name: &str, prob: LinearIndex, positive_share: f64, scale: LinearIndex) -> Self {
        Self {
            name: name.to_string(),
            base_policy: BasePolicy::RestrictedEngine,
            deviation_prob: prob,
            deviation_draw: DeviationDraw {
                positive_share,
                scale,
            },
            noise_sd: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let q = self.deviation_draw.positive_share;
        if !(0.0..=1.0).contains(&q) {
            return Err(SimError::InvalidAgent(format!("positive_share {q} outside [0, 1]")));
        }
        if self.deviation_draw.scale.intercept <= 0.0 && self.deviation_draw.scale.coefficients.is_empty() {
            return Err(SimError::InvalidAgent("magnitude scale must be positive".into()));
        }
        if self.noise_sd < 0.0 {
            return Err(SimError::InvalidAgent("noise_sd must be non-negative".into()));
        }
        Ok(())
    }

    /// π(x) clamped to [0, 1], and whether clamping was needed.
    pub fn probability(&self, value: &dyn Fn(&str) -> Option<f64>) -> Result<(f64, bool), SimError> {
        let p = self.deviation_prob.eval(value)?;
        Ok((p.clamp(0.0, 1.0), !(0.0..=1.0).contains(&p)))
    }

    /// Magnitude scale at `x`, floored at [`MIN_SCALE`].
    pub fn scale(&self, value: &dyn Fn(&str) -> Option<f64>) -> Result<f64, SimError> {
        Ok(self.deviation_draw.scale.eval(value)?.max(MIN_SCALE))
    }

    /// Signed deviation in centipawns, never zero.
    fn draw_centipawns(&self, rng: &mut ChaCha8Rng, scale: f64) -> i32 {
        let size = Exp::new(1.0 / scale).expect("positive scale").sample(rng);
        let cp = ((size * 100.0).round() as i32).max(1);
        if rng.random_bool(self.deviation_draw.positive_share) {
            cp
        } else {
            -cp
        }
    }
}

/// Where covariates come from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateSource {
    /// Generated panels: random-walk standing, decreasing clocks.
    #[default]
    Synthetic,
    /// Games resampled with replacement from an observed dataset.
    Template(#[serde(skip)] Vec<MoveObservation>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub n_replications: usize,
    /// Games per replicated panel.
    pub n_games: usize,
    /// Rows per player and game for synthetic covariates.
    pub moves_per_player: usize,
    /// Added to the agent's deviation-probability coefficients.
    #[serde(default)]
    pub injected_effects: BTreeMap<String, f64>,
    /// Regressors of the validation fits.
    #[serde(default = "default_regressors")]
    pub regressors: Vec<String>,
    #[serde(default = "default_true")]
    pub fixed_effects: bool,
    #[serde(default)]
    pub covariates: CovariateSource,
}

fn default_regressors() -> Vec<String> {
    crate::econometrics::BASE_REGRESSORS.iter().map(|s| s.to_string()).collect()
}

fn default_true() -> bool {
    true
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            n_replications: 200,
            n_games: 50,
            moves_per_player: 20,
            injected_effects: BTreeMap::new(),
            regressors: default_regressors(),
            fixed_effects: true,
            covariates: CovariateSource::Synthetic,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_games < 2 {
            return Err(SimError::InvalidConfig("need at least 2 games for clustering".into()));
        }
        if self.moves_per_player == 0 {
            return Err(SimError::InvalidConfig("moves_per_player must be positive".into()));
        }
        if let CovariateSource::Template(rows) = &self.covariates {
            if rows.is_empty() {
                return Err(SimError::InvalidConfig("template dataset is empty".into()));
            }
        }
        Ok(())
    }

    /// The agent with `injected_effects` folded into its probability index.
    pub fn effective_agent(&self, agent: &AgentSpec) -> AgentSpec {
        let mut a = agent.clone();
        for (name, c) in &self.injected_effects {
            a.deviation_prob = a.deviation_prob.with(name, *c);
        }
        a
    }
}

/// Random stream of replication `replication`.
pub fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Numeric covariate of a row by dataset column name.
pub fn covariate_value(row: &MoveObservation, name: &str) -> Option<f64> {
    Some(match name {
        "standing_pawnunits" => row.standing_pawnunits,
        "better_pos" => f64::from(row.better_pos),
        "worse_pos" => f64::from(row.worse_pos),
        "better_pawnunits" => row.better_pawnunits,
        "worse_pawnunits" => row.worse_pawnunits,
        "remaining_time_hours" => row.remaining_time_hours?,
        "time_spent_minutes" => row.time_spent_minutes?,
        "num_previous_moves" => f64::from(row.num_previous_moves),
        "near_time_control" => f64::from(row.near_time_control),
        "game_duration_hours" => row.game_duration_hours?,
        "opp_remaining_time_hours" => row.opp_remaining_time_hours?,
        "opp_time_spent_minutes" => row.opp_time_spent_minutes?,
        "complexity_seconds" => row.complexity_seconds,
        "complexity_nodes" => row.complexity_nodes as f64,
        "dist_second_best" => row.dist_second_best?,
        "mover_white" => f64::from(row.mover_white),
        "elo_player_100" => row.elo_player_100?,
        "elo_diff_100" => row.elo_diff_100?,
        "favorite" => f64::from(row.favorite?),
        _ => return None,
    })
}

fn synthetic_covariates(rng: &mut ChaCha8Rng, replication: usize, n_games: usize, moves: usize) -> Vec<MoveObservation> {
    let step = Normal::<f64>::new(0.0, 0.35).expect("valid");
    let spend = Exp::<f64>::new(1.0 / 2.5).expect("valid");
    let complexity = Normal::<f64>::new(0.0, 0.6).expect("valid");
    let gap = Exp::<f64>::new(1.0 / 0.3).expect("valid");
    let mut rows = Vec::with_capacity(n_games * moves * 2);
    for g in 0..n_games {
        let game_id = format!("sim{replication:04}-g{g:03}");
        let elo = [rng.random_range(2500u32..2800), rng.random_range(2500u32..2800)];
        let mut remaining = [1.5f64, 1.5];
        let mut standing = 0.0f64;
        let mut duration_min = 0.0f64;
        for t in 0..moves {
            let full_move = 16 + t as u32;
            for side in 0..2 {
                standing = (standing + step.sample(rng)).clamp(-10.0, 10.0);
                let s = if side == 0 { standing } else { -standing };
                let spent = spend.sample(rng).min(remaining[side] * 60.0 * 0.5);
                remaining[side] -= spent / 60.0;
                if full_move == 40 {
                    remaining[side] += 0.5;
                }
                let cp = (s * 100.0).round() as i32;
                let s = f64::from(cp) / 100.0;
                let seconds = complexity.sample(rng).exp() * 4.0;
                rows.push(MoveObservation {
                    game_id: game_id.clone(),
                    player_id: format!("player{:03}", (g * 2 + side) % 37),
                    ply: 2 * (full_move - 1) + side as u32 + 1,
                    full_move,
                    mover_white: u8::from(side == 0),
                    elo_player: Some(elo[side]),
                    elo_opponent: Some(elo[1 - side]),
                    elo_player_100: Some(f64::from(elo[side]) / 100.0),
                    elo_diff_100: Some((f64::from(elo[side]) - f64::from(elo[1 - side])) / 100.0),
                    favorite: Some(u8::from(elo[side] > elo[1 - side])),
                    played_uci: String::new(),
                    restricted_uci: String::new(),
                    standing_pawnunits: s,
                    better_pos: u8::from(s > 0.5),
                    worse_pos: u8::from(s < -0.5),
                    better_pawnunits: s.max(0.0),
                    worse_pawnunits: (-s).max(0.0),
                    advantage_cat: AdvantageCategory::from_centipawns(cp),
                    remaining_time_hours: Some(remaining[side]),
                    time_spent_minutes: Some(spent),
                    num_previous_moves: full_move - 1,
                    near_time_control: u8::from((31..=40).contains(&full_move)),
                    game_duration_hours: Some(duration_min / 60.0),
                    opp_remaining_time_hours: None,
                    opp_time_spent_minutes: None,
                    complexity_seconds: seconds,
                    complexity_nodes: (seconds * 250_000.0) as u64,
                    dist_second_best: Some(-((gap.sample(rng) * 100.0).round() / 100.0)),
                    is_best: 0,
                    p_human: 0.0,
                    p_restricted: 0.0,
                    delta: 0.0,
                    delta_e: 0,
                    delta_p: 0,
                    delta_n: 0,
                    delta_c: 0,
                    delta_l: 0.0,
                });
                duration_min += spent;
            }
        }
        // opponent clocks: reply after, previous move before
        let (start, end) = (rows.len() - moves * 2, rows.len());
        for i in start..end {
            rows[i].opp_remaining_time_hours = (i + 1 < end).then(|| rows[i + 1].remaining_time_hours).flatten();
            rows[i].opp_time_spent_minutes = (i > start).then(|| rows[i - 1].time_spent_minutes).flatten();
        }
    }
    rows
}

fn template_covariates(rng: &mut ChaCha8Rng, replication: usize, template: &[MoveObservation], n_games: usize) -> Vec<MoveObservation> {
    let mut by_game: BTreeMap<&str, Vec<&MoveObservation>> = BTreeMap::new();
    for r in template {
        by_game.entry(&r.game_id).or_default().push(r);
    }
    let games: Vec<&Vec<&MoveObservation>> = by_game.values().collect();
    let mut rows = Vec::new();
    for g in 0..n_games {
        let pick = games[rng.random_range(0..games.len())];
        for r in pick {
            let mut row = (*r).clone();
            row.game_id = format!("sim{replication:04}-g{g:03}");
            row.player_id = format!("{}#{g}", r.player_id);
            rows.push(row);
        }
    }
    rows
}

fn restricted_centipawns(row: &MoveObservation, rng: &mut ChaCha8Rng, agent: &AgentSpec, synthetic: bool) -> i32 {
    let base = if synthetic {
        if rng.random_bool(0.6) {
            0
        } else {
            -((Exp::<f64>::new(1.0 / 0.25).expect("valid").sample(rng) * 100.0).round() as i32)
        }
    } else {
        (row.p_restricted * 100.0).round() as i32
    };
    match agent.base_policy {
        BasePolicy::RestrictedEngine => base,
        BasePolicy::NoisyRestricted if agent.noise_sd > 0.0 => {
            let noise = Normal::new(0.0, agent.noise_sd).expect("valid").sample(rng);
            base + (noise * 100.0).round() as i32
        }
        BasePolicy::NoisyRestricted => base,
    }
}

/// One replicated panel with deviations injected as performance gaps.
/// Identical `(config, agent, replication)` give bit-identical rows.
pub fn simulate_panel(config: &SimConfig, agent: &AgentSpec, replication: usize) -> Result<Dataset, SimError> {
    config.validate()?;
    agent.validate()?;
    let agent = config.effective_agent(agent);
    let mut rng = replication_rng(config.seed, replication as u64);
    let (mut rows, synthetic) = match &config.covariates {
        CovariateSource::Synthetic => (
            synthetic_covariates(&mut rng, replication, config.n_games, config.moves_per_player),
            true,
        ),
        CovariateSource::Template(t) => (template_covariates(&mut rng, replication, t, config.n_games), false),
    };
    for row in &mut rows {
        let value = |name: &str| covariate_value(row, name);
        let (p, _) = agent.probability(&value)?;
        let scale = agent.scale(&value)?;
        let r_cp = restricted_centipawns(row, &mut rng, &agent, synthetic);
        let deviates = rng.random_bool(p);
        let d_cp = if deviates { agent.draw_centipawns(&mut rng, scale) } else { 0 };
        let h_cp = r_cp + d_cp;
        let d = delta_family(h_cp, r_cp);
        row.p_restricted = f64::from(r_cp) / 100.0;
        row.p_human = f64::from(h_cp) / 100.0;
        row.is_best = u8::from(h_cp == 0);
        if !deviates {
            row.played_uci = row.restricted_uci.clone();
        } else if !synthetic {
            row.played_uci = String::new();
        }
        row.delta = d.delta;
        row.delta_e = d.delta_e;
        row.delta_p = d.delta_p;
        row.delta_n = d.delta_n;
        row.delta_c = d.delta_c;
        row.delta_l = d.delta_l;
    }
    rows.sort_by(|a, b| (&a.game_id, a.ply).cmp(&(&b.game_id, b.ply)));
    let zero = rows.iter().filter(|r| r.delta_e == 0).count();
    let manifest = crate::measures::DatasetManifest {
        choice: MoveChoice::Simulated,
        engine_tags: vec![format!("simulated:{}", agent.name)],
        games_total: config.n_games,
        games_used: config.n_games,
        rows: rows.len(),
        rows_attempted: rows.len(),
        share_delta_zero: (!rows.is_empty()).then(|| zero as f64 / rows.len() as f64),
        ..Default::default()
    };
    Ok(Dataset { rows, manifest })
}

struct AgentChooser<'a> {
    agent: &'a AgentSpec,
    seed: u64,
}

impl AgentChooser<'_> {
    fn value(ctx: &ChoiceContext<'_>, name: &str) -> Option<f64> {
        let c = ctx.covariates;
        Some(match name {
            "standing_pawnunits" => f64::from(crate::measures::standing_centipawns(ctx.super_eval)) / 100.0,
            "better_pos" => f64::from(c.better_pos),
            "worse_pos" => f64::from(c.worse_pos),
            "better_pawnunits" => c.better_pawnunits,
            "worse_pawnunits" => c.worse_pawnunits,
            "num_previous_moves" => f64::from(c.num_previous_moves),
            "near_time_control" => f64::from(c.near_time_control),
            "complexity_seconds" => c.complexity_seconds,
            "complexity_nodes" => c.complexity_nodes as f64,
            "dist_second_best" => c.dist_second_best?,
            "remaining_time_hours" => ctx.time?.remaining_time_hours,
            "time_spent_minutes" => ctx.time?.time_spent_minutes,
            "mover_white" => f64::from(u8::from(ctx.mv.mover == crate::chess::Color::White)),
            _ => return None,
        })
    }
}

impl MoveChooser for AgentChooser<'_> {
    fn choose(&self, ctx: &ChoiceContext<'_>) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::new()
            .chain_update(self.seed.to_le_bytes())
            .chain_update(ctx.game.game_id.as_bytes())
            .chain_update(ctx.mv.ply.to_le_bytes())
            .finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(key);
        let p = match self.agent.probability(&|n| Self::value(ctx, n)) {
            Ok((p, _)) => p,
            Err(e) => {
                log::warn!("{e}; treating as no deviation");
                0.0
            }
        };
        let alternatives: Vec<&str> = ctx
            .super_eval
            .lines
            .iter()
            .map(|l| l.uci.as_str())
            .filter(|m| *m != ctx.restricted)
            .collect();
        if alternatives.is_empty() || !rng.random_bool(p) {
            return ctx.restricted.to_string();
        }
        alternatives[rng.random_range(0..alternatives.len())].to_string()
    }
}

/// Move-level simulation: at each eligible position the agent plays the
/// restricted engine's move with probability 1 − π(x), otherwise a random
/// other line of the super analysis; the measures pipeline scores the
/// result unchanged. The probability index may use covariates known before
/// the move (standing, clocks, move number, complexity).
pub fn simulate_move_level(
    games: &[GameRecord],
    source: &dyn EvaluationSource,
    agent: &AgentSpec,
    seed: u64,
    opts: &BuildOptions,
) -> Result<Dataset, SimError> {
    agent.validate()?;
    let mut opts = opts.clone();
    opts.choice = MoveChoice::Simulated;
    let chooser = AgentChooser { agent, seed };
    Ok(build_dataset_with(games, source, &opts, &chooser)?)
}
