//! Python bindings: PGN parsing, move measures, fixed-effects fits,
//! simulation and the staged pipeline.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use bench::econometrics::{self, render_table, FitResult, Frame, ModelSpec};
use bench::engine::{EvalResult, PvLine, Score, ScoreKind};
use bench::measures::{self, AfterMove};
use bench::pgn::{self, GameRecord};
use bench::pipeline::{self as pl, PipelineConfig, StageOutcome};
use bench::simulator::{self, AgentSpec, SimConfig};

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl ToString) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// A parsed game.
#[pyclass(module = "boundbench", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Game {
    inner: GameRecord,
}

#[pymethods]
impl Game {
    #[getter]
    fn game_id(&self) -> &str {
        &self.inner.game_id
    }

    #[getter]
    fn event(&self) -> &str {
        &self.inner.event
    }

    #[getter]
    fn white(&self) -> (String, Option<u32>) {
        (self.inner.white.name.clone(), self.inner.white.elo)
    }

    #[getter]
    fn black(&self) -> (String, Option<u32>) {
        (self.inner.black.name.clone(), self.inner.black.elo)
    }

    #[getter]
    fn result(&self) -> &'static str {
        self.inner.result.as_pgn()
    }

    #[getter]
    fn time_control(&self) -> Option<String> {
        self.inner.time_control.as_ref().map(|t| t.to_string())
    }

    /// `(ply, san, uci, fen_before, clock_after_seconds)` per half-move.
    fn moves(&self) -> Vec<(u32, String, String, String, Option<u32>)> {
        self.inner
            .moves
            .iter()
            .map(|m| (m.ply, m.san.clone(), m.uci.clone(), m.fen_before.clone(), m.clock_after))
            .collect()
    }

    /// Remaining hours and minutes spent per half-move, `None` where the
    /// clocks are unusable.
    fn time_features(&self) -> Vec<Option<(f64, f64)>> {
        match pgn::derive_time_features(&self.inner) {
            Ok(t) => t
                .into_iter()
                .map(|r| r.ok().map(|f| (f.remaining_time_hours, f.time_spent_minutes)))
                .collect(),
            Err(_) => vec![None; self.inner.moves.len()],
        }
    }

    fn to_pgn(&self) -> String {
        pgn::write_pgn(&self.inner)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.moves.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Game({} - {}, {}, {} plies)",
            self.inner.white.name,
            self.inner.black.name,
            self.inner.result.as_pgn(),
            self.inner.moves.len()
        )
    }
}

/// Parses PGN text; returns the games and `(line, message)` diagnostics.
#[pyfunction]
fn parse_pgn(text: &str) -> (Vec<Game>, Vec<(usize, String)>) {
    let parsed = pgn::parse_pgn(text);
    (
        parsed.games.into_iter().map(|inner| Game { inner }).collect(),
        parsed.diagnostics.into_iter().map(|d| (d.line, d.error.to_string())).collect(),
    )
}

fn cp_line(uci: &str, cp: i32) -> PvLine {
    PvLine {
        uci: uci.to_string(),
        score: Score {
            kind: ScoreKind::Centipawns,
            value: cp,
        },
    }
}

/// Performance of `played` in pawn units, mover perspective.
///
/// `lines` are the super engine's `(uci, centipawns)` lines, best first,
/// scored for the side to move. `after_cp` is the engine score of the
/// position after `played` for the opponent to move; it is needed only
/// when `played` is not among `lines`.
#[pyfunction]
#[pyo3(signature = (fen, lines, played, after_cp=None))]
fn move_performance(fen: &str, lines: Vec<(String, i32)>, played: &str, after_cp: Option<i32>) -> PyResult<f64> {
    if lines.is_empty() {
        return Err(value_err("at least one line is required"));
    }
    let eval = |fen: &str, lines: Vec<PvLine>| EvalResult {
        fen: fen.to_string(),
        engine_tag: "python".into(),
        depth: 0,
        bestmove: lines[0].uci.clone(),
        lines,
        nodes: 0,
        elapsed_seconds: 0.0,
    };
    let super_eval = eval(fen, lines.iter().map(|(u, c)| cp_line(u, *c)).collect());
    let after = match after_cp {
        Some(cp) => Some(AfterMove::Evaluated(eval("", vec![cp_line("", cp)]))),
        None => AfterMove::terminal_after(fen, played).map_err(value_err)?,
    };
    measures::move_performance(&super_eval, played, after.as_ref())
        .map(|p| p.pawn_units())
        .map_err(value_err)
}

/// The deviation family for integer-centipawn performances:
/// `(delta, delta_E, delta_P, delta_N, delta_C, delta_L)`.
#[pyfunction]
fn delta_family(p_human_cp: i32, p_restricted_cp: i32) -> (f64, u8, u8, u8, i8, f64) {
    let d = measures::delta_family(p_human_cp, p_restricted_cp);
    (d.delta, d.delta_e, d.delta_p, d.delta_n, d.delta_c, d.delta_l)
}

/// `sign(x) * ln(1 + |x|)`.
#[pyfunction]
fn log_modulus(x: f64) -> f64 {
    measures::log_modulus(x)
}

/// Columns of equal length, read from a dataset CSV.
#[pyclass(module = "boundbench", name = "Frame")]
struct PyFrame {
    inner: Frame,
}

#[pymethods]
impl PyFrame {
    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        let file = std::fs::File::open(&path).map_err(value_err)?;
        Frame::from_csv(file).map(|inner| PyFrame { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn from_csv_text(text: &str) -> PyResult<Self> {
        Frame::from_csv(text.as_bytes()).map(|inner| PyFrame { inner }).map_err(value_err)
    }

    /// Builds a frame from `{name: list}`; lists of str become text columns.
    #[staticmethod]
    fn from_columns(columns: Vec<(String, Bound<'_, PyAny>)>) -> PyResult<Self> {
        let mut f = Frame::new();
        for (name, values) in columns {
            if let Ok(v) = values.extract::<Vec<Option<f64>>>() {
                f.push(&name, econometrics::Column::Numeric(v)).map_err(value_err)?;
            } else {
                let v: Vec<Option<String>> = values.extract()?;
                f.push(&name, econometrics::Column::Text(v)).map_err(value_err)?;
            }
        }
        Ok(PyFrame { inner: f })
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.names().to_vec()
    }

    fn numeric(&self, name: &str) -> PyResult<Vec<Option<f64>>> {
        self.inner.numeric(name).map(|v| v.to_vec()).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }
}

/// One estimated model.
#[pyclass(module = "boundbench", name = "FitResult", frozen, from_py_object)]
#[derive(Clone)]
struct PyFit {
    inner: FitResult,
}

#[pymethods]
impl PyFit {
    #[getter]
    fn outcome(&self) -> &str {
        &self.inner.outcome
    }

    /// `(name, estimate, std_error, t_stat, p_value)` rows.
    #[getter]
    fn coefficients(&self) -> Vec<(String, f64, f64, f64, f64)> {
        self.inner
            .coefficients
            .iter()
            .map(|c| (c.name.clone(), c.estimate, c.std_error, c.t_stat, c.p_value))
            .collect()
    }

    #[getter]
    fn vcov(&self) -> Vec<Vec<f64>> {
        self.inner.vcov.clone()
    }

    #[getter]
    fn n_obs(&self) -> usize {
        self.inner.n_obs
    }

    #[getter]
    fn n_groups(&self) -> usize {
        self.inner.n_groups
    }

    #[getter]
    fn n_clusters(&self) -> usize {
        self.inner.n_clusters
    }

    #[getter]
    fn correction(&self) -> &str {
        &self.inner.correction
    }

    fn coefficient(&self, name: &str) -> Option<(f64, f64)> {
        self.inner.coefficient(name).map(|c| (c.estimate, c.std_error))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        render_table(&self.inner.outcome, std::slice::from_ref(&self.inner))
    }
}

/// Within-transformed OLS with player-game fixed effects and
/// game-clustered CR1 standard errors.
#[pyfunction]
#[pyo3(signature = (frame, outcome, regressors, fixed_effects=true, subset=Vec::new(), cluster="game_id"))]
fn fit(
    frame: &PyFrame,
    outcome: &str,
    regressors: Vec<String>,
    fixed_effects: bool,
    subset: Vec<String>,
    cluster: &str,
) -> PyResult<PyFit> {
    let refs: Vec<&str> = regressors.iter().map(String::as_str).collect();
    let mut spec = ModelSpec::new(outcome, &refs);
    spec.fixed_effects = fixed_effects;
    spec.subset = subset;
    spec.cluster = cluster.to_string();
    econometrics::fit_model(&frame.inner, &spec)
        .map(|inner| PyFit { inner })
        .map_err(value_err)
}

/// Estimates a built-in table; returns its title and fits.
#[pyfunction]
fn fit_table(frame: &PyFrame, name: &str) -> PyResult<(String, Vec<PyFit>)> {
    let table = econometrics::builtin(name).ok_or_else(|| value_err(format!("unknown table '{name}'")))?;
    let fits = table
        .specs
        .iter()
        .map(|s| econometrics::fit_model(&frame.inner, s).map(|inner| PyFit { inner }))
        .collect::<Result<Vec<_>, _>>()
        .map_err(value_err)?;
    Ok((table.title.to_string(), fits))
}

#[pyfunction]
fn table_names() -> Vec<&'static str> {
    econometrics::builtin_names().to_vec()
}

/// Text table in the report layout.
#[pyfunction]
fn render(title: &str, fits: Vec<PyFit>) -> String {
    let fits: Vec<FitResult> = fits.into_iter().map(|f| f.inner).collect();
    render_table(title, &fits)
}

fn sim_config(seed: u64, replications: usize, n_games: usize) -> SimConfig {
    SimConfig {
        seed,
        n_replications: replications,
        n_games,
        ..SimConfig::default()
    }
}

fn agent(name: &str) -> PyResult<AgentSpec> {
    AgentSpec::by_name(name).ok_or_else(|| value_err(format!("unknown agent '{name}'")))
}

/// One simulated panel as a frame.
#[pyfunction]
#[pyo3(signature = (agent_name, replication=0, seed=SimConfig::default().seed, n_games=50))]
fn simulate_panel(agent_name: &str, replication: usize, seed: u64, n_games: usize) -> PyResult<PyFrame> {
    let data = simulator::simulate_panel(&sim_config(seed, 1, n_games), &agent(agent_name)?, replication)
        .map_err(value_err)?;
    Frame::from_observations(&data.rows)
        .map(|inner| PyFrame { inner })
        .map_err(value_err)
}

/// Replicated recovery of the agent's designed margins; returns the
/// rendered report and the JSON summary.
#[pyfunction]
#[pyo3(signature = (agent_name, replications=200, seed=SimConfig::default().seed, n_games=50))]
fn validate_identification(
    py: Python<'_>,
    agent_name: &str,
    replications: usize,
    seed: u64,
    n_games: usize,
) -> PyResult<(String, String)> {
    let config = sim_config(seed, replications, n_games);
    let a = agent(agent_name)?;
    let report = py
        .detach(|| simulator::validate_identification(&config, &a))
        .map_err(value_err)?;
    let json = serde_json::to_string(&report).map_err(value_err)?;
    Ok((report.render(), json))
}

fn outcome_dict(o: StageOutcome) -> (bool, Vec<(String, f64)>, Vec<String>) {
    (o.up_to_date, o.counts.into_iter().collect(), o.lines)
}

/// A run directory; each stage returns `(up_to_date, counts, lines)`.
#[pyclass(module = "boundbench", unsendable)]
struct Pipeline {
    inner: pl::Pipeline,
}

#[pymethods]
impl Pipeline {
    #[new]
    #[pyo3(signature = (run_dir, config=None, workers=1))]
    fn new(run_dir: PathBuf, config: Option<PathBuf>, workers: usize) -> PyResult<Self> {
        let cfg = match config {
            Some(p) => PipelineConfig::load(&p).map_err(value_err)?,
            None => PipelineConfig::defaults_at(&std::env::current_dir().map_err(runtime_err)?),
        };
        pl::Pipeline::open(run_dir, cfg, workers)
            .map(|inner| Pipeline { inner })
            .map_err(runtime_err)
    }

    #[getter]
    fn run_hash(&self) -> String {
        self.inner.run_hash().to_string()
    }

    fn ingest(&mut self, paths: Vec<PathBuf>) -> PyResult<(bool, Vec<(String, f64)>, Vec<String>)> {
        self.inner.ingest(&paths).map(outcome_dict).map_err(runtime_err)
    }

    fn evaluate(&mut self) -> PyResult<(bool, Vec<(String, f64)>, Vec<String>)> {
        self.inner.evaluate().map(outcome_dict).map_err(runtime_err)
    }

    fn measures(&mut self) -> PyResult<(bool, Vec<(String, f64)>, Vec<String>)> {
        self.inner.measures().map(outcome_dict).map_err(runtime_err)
    }

    #[pyo3(signature = (tables=Vec::new()))]
    fn regress(&mut self, tables: Vec<String>) -> PyResult<(bool, Vec<(String, f64)>, Vec<String>)> {
        self.inner.regress(&tables).map(outcome_dict).map_err(runtime_err)
    }

    #[pyo3(signature = (agent=None, replications=None, seed=None))]
    fn simulate(
        &mut self,
        agent: Option<String>,
        replications: Option<usize>,
        seed: Option<u64>,
    ) -> PyResult<(bool, Vec<(String, f64)>, Vec<String>)> {
        self.inner
            .simulate(&pl::SimulateOptions { agent, replications }, seed)
            .map(outcome_dict)
            .map_err(runtime_err)
    }

    fn report(&mut self) -> PyResult<(bool, Vec<(String, f64)>, Vec<String>)> {
        self.inner.report().map(outcome_dict).map_err(runtime_err)
    }
}

#[pymodule]
fn boundbench(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Game>()?;
    m.add_class::<PyFrame>()?;
    m.add_class::<PyFit>()?;
    m.add_class::<Pipeline>()?;
    m.add_function(wrap_pyfunction!(parse_pgn, m)?)?;
    m.add_function(wrap_pyfunction!(move_performance, m)?)?;
    m.add_function(wrap_pyfunction!(delta_family, m)?)?;
    m.add_function(wrap_pyfunction!(log_modulus, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_table, m)?)?;
    m.add_function(wrap_pyfunction!(table_names, m)?)?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_panel, m)?)?;
    m.add_function(wrap_pyfunction!(validate_identification, m)?)?;
    Ok(())
}
