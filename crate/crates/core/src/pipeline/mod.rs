//! Staged, resumable runs over a run directory: ingest, evaluate, measures,
//! regress, simulate and report.

mod config;
mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::econometrics::{
    binned_effects, decomposition, render_binned, render_decomposition, render_table, results_csv, FitResult, Frame,
};
use crate::engine::{start_pool, validate_engine_pair, CacheKey, EngineConfig, EnginePool, EvalCache};
use crate::measures::{
    build_dataset, eligible_moves, read_dataset, required_after_positions, write_dataset, BuildOptions,
    CachedEvaluations, DatasetManifest, EvaluationSource, MoveChoice,
};
use crate::pgn::{parse_pgn_with, GameRecord};
use crate::simulator::{validate_identification, simulate_panel, CovariateSource, ValidationReport};

pub use config::{
    EnginesConfig, IngestConfig, PipelineConfig, RegressConfig, ReportConfig, SimulationConfig, TableConfig,
    ENV_ENGINE, ENV_RESTRICTED_ENGINE, ENV_SUPER_ENGINE,
};
pub use manifest::{sha256_hex, ArtifactRecord, RunManifest, StageRecord, MANIFEST_FILE};

use manifest::{combine_hashes, write_atomic};

pub const GAMES_FILE: &str = "games.jsonl";
pub const INGEST_DIAGNOSTICS: &str = "ingest_diagnostics.txt";
pub const EVALUATION_SUMMARY: &str = "evaluations.json";
pub const CACHE_DIR: &str = "cache";
pub const DATASET_FILE: &str = "dataset.csv";
pub const DATASET_MANIFEST: &str = "dataset_manifest.json";
pub const RESULTS_DIR: &str = "results";
pub const SIM_DIR: &str = "simulation";
pub const REPORT_DIR: &str = "report";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("no games parsed from {0}")]
    NoGames(String),
    #[error("the dataset has no rows")]
    EmptyDataset,
    #[error("missing artifact {path}: run the {stage} stage first")]
    MissingArtifact { stage: String, path: String },
    #[error("{stage} failed: {message}")]
    Stage { stage: String, message: String },
    #[error("io: {0}")]
    Io(String),
}

impl PipelineError {
    /// Process exit status: 2 for empty input, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::NoGames(_) | PipelineError::EmptyDataset => 2,
            _ => 1,
        }
    }

    fn stage(stage: &str, message: impl ToString) -> Self {
        PipelineError::Stage {
            stage: stage.to_string(),
            message: message.to_string(),
        }
    }
}

/// What a stage did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: String,
    /// Inputs were unchanged and the recorded artifacts were reused.
    pub up_to_date: bool,
    pub counts: BTreeMap<String, f64>,
    pub lines: Vec<String>,
}

impl StageOutcome {
    pub fn count(&self, name: &str) -> Option<f64> {
        self.counts.get(name).copied()
    }
}

/// Options of the simulate stage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulateOptions {
    pub agent: Option<String>,
    pub replications: Option<usize>,
}

/// JSON envelope carrying the run hash.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Stamped<T> {
    run_hash: String,
    #[serde(flatten)]
    body: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableResults {
    table: String,
    title: String,
    dataset_hash: String,
    fits: Vec<FitResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EvaluationSummary {
    games_hash: String,
    engine_tags: Vec<String>,
    positions: usize,
    after_positions: usize,
    engine_calls: u64,
    cache_hits: u64,
    failures: usize,
}

/// A run directory bound to one configuration.
pub struct Pipeline {
    run_dir: PathBuf,
    config: PipelineConfig,
    workers: usize,
    manifest: RunManifest,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io(format!("{}: {e}", path.display()))
}

/// PGN files named by `inputs`; directories contribute their `*.pgn` files.
pub fn collect_pgn_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| io_err(input, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgn")))
                .collect();
            found.sort();
            files.extend(found);
        } else if input.is_file() {
            files.push(input.clone());
        } else {
            return Err(io_err(input, "no such file or directory"));
        }
    }
    Ok(files)
}

impl Pipeline {
    /// Opens (or creates) `run_dir`. A changed configuration gets a new run
    /// hash, which invalidates every stage.
    pub fn open(run_dir: impl Into<PathBuf>, config: PipelineConfig, workers: usize) -> Result<Self, PipelineError> {
        let run_dir = run_dir.into();
        fs::create_dir_all(&run_dir).map_err(|e| io_err(&run_dir, e))?;
        let snapshot = config.to_toml()?;
        // engines are identified by their tags; binary locations are local
        let mut portable = config.clone();
        portable.engines.super_engine.binary_path = PathBuf::new();
        portable.engines.restricted.binary_path = PathBuf::new();
        let run_hash = combine_hashes(&[
            ("config", &sha256_hex(portable.to_toml()?.as_bytes())),
            ("version", env!("CARGO_PKG_VERSION")),
        ]);
        let manifest = match RunManifest::load(&run_dir)? {
            Some(mut m) if m.run_hash == run_hash => {
                m.config_snapshot = snapshot;
                m
            }
            Some(_) | None => {
                let t = now();
                RunManifest {
                    run_hash,
                    config_snapshot: snapshot,
                    tool_version: env!("CARGO_PKG_VERSION").to_string(),
                    created: t.clone(),
                    updated: t,
                    ..Default::default()
                }
            }
        };
        let p = Pipeline {
            run_dir,
            config,
            workers: workers.max(1),
            manifest,
        };
        p.manifest.save(&p.run_dir)?;
        Ok(p)
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn run_hash(&self) -> &str {
        &self.manifest.run_hash
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.run_dir.join(rel)
    }

    fn require(&self, stage: &str, rel: &str) -> Result<String, PipelineError> {
        match self.manifest.artifact_hash(stage, rel) {
            Some(h) if self.path(rel).exists() => Ok(h.to_string()),
            _ => Err(PipelineError::MissingArtifact {
                stage: stage.to_string(),
                path: self.path(rel).display().to_string(),
            }),
        }
    }

    fn input_hash(&self, stage: &str, parts: &[(&str, &str)]) -> String {
        let mut all = vec![("run", self.run_hash()), ("stage", stage)];
        all.extend_from_slice(parts);
        combine_hashes(&all)
    }

    fn up_to_date(&self, stage: &str, input_hash: &str) -> Option<StageOutcome> {
        if !self.manifest.is_current(&self.run_dir, stage, input_hash) {
            return None;
        }
        let rec = &self.manifest.stages[stage];
        Some(StageOutcome {
            stage: stage.to_string(),
            up_to_date: true,
            counts: rec.counts.clone(),
            lines: vec![format!("{stage}: up to date ({} artifacts)", rec.artifacts.len())],
        })
    }

    fn write(&self, rel: &str, bytes: &[u8]) -> Result<ArtifactRecord, PipelineError> {
        let path = self.path(rel);
        write_atomic(&path, bytes)?;
        Ok(ArtifactRecord {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        })
    }

    fn write_json<T: Serialize>(&self, rel: &str, body: &T) -> Result<ArtifactRecord, PipelineError> {
        let stamped = Stamped {
            run_hash: self.run_hash().to_string(),
            body,
        };
        let text = serde_json::to_string_pretty(&stamped).map_err(|e| PipelineError::Io(e.to_string()))?;
        self.write(rel, text.as_bytes())
    }

    fn write_text(&self, rel: &str, body: &str) -> Result<ArtifactRecord, PipelineError> {
        self.write(rel, format!("Run {}\n\n{body}", self.run_hash()).as_bytes())
    }

    /// Data file plus a `.meta.json` sidecar naming the run and the file's hash.
    fn write_data(&self, rel: &str, bytes: &[u8]) -> Result<Vec<ArtifactRecord>, PipelineError> {
        let data = self.write(rel, bytes)?;
        #[derive(Serialize)]
        struct Meta<'a> {
            file: &'a str,
            sha256: &'a str,
        }
        let meta = self.write_json(
            &format!("{rel}.meta.json"),
            &Meta {
                file: rel,
                sha256: &data.sha256,
            },
        )?;
        Ok(vec![data, meta])
    }

    fn record(
        &mut self,
        stage: &str,
        input_hash: String,
        started: String,
        artifacts: Vec<ArtifactRecord>,
        counts: BTreeMap<String, f64>,
        lines: Vec<String>,
    ) -> Result<StageOutcome, PipelineError> {
        let finished = now();
        self.manifest.updated = finished.clone();
        self.manifest.stages.insert(
            stage.to_string(),
            StageRecord {
                input_hash,
                started,
                finished,
                artifacts,
                counts: counts.clone(),
            },
        );
        self.manifest.save(&self.run_dir)?;
        Ok(StageOutcome {
            stage: stage.to_string(),
            up_to_date: false,
            counts,
            lines,
        })
    }

    fn load_games(&self) -> Result<(Vec<GameRecord>, String), PipelineError> {
        let hash = self.require("ingest", GAMES_FILE)?;
        let path = self.path(GAMES_FILE);
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let games = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str::<GameRecord>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| io_err(&path, e))?;
        Ok((games, hash))
    }

    fn load_frame(&self) -> Result<(Frame, String), PipelineError> {
        let hash = self.require("measures", DATASET_FILE)?;
        let path = self.path(DATASET_FILE);
        let file = fs::File::open(&path).map_err(|e| io_err(&path, e))?;
        let rows = read_dataset(file).map_err(|e| io_err(&path, e))?;
        let frame = Frame::from_observations(&rows).map_err(|e| io_err(&path, e))?;
        Ok((frame, hash))
    }

    /// Parses PGN files (or directories of them) into `games.jsonl`.
    pub fn ingest(&mut self, inputs: &[PathBuf]) -> Result<StageOutcome, PipelineError> {
        const STAGE: &str = "ingest";
        let inputs = if inputs.is_empty() {
            self.config.ingest.paths.clone()
        } else {
            inputs.to_vec()
        };
        if inputs.is_empty() {
            return Err(PipelineError::Config("no PGN input given".into()));
        }
        let files = collect_pgn_files(&inputs)?;
        let described = inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ");
        let mut sources = Vec::new();
        let mut parts = String::new();
        for f in &files {
            let text = fs::read_to_string(f).map_err(|e| io_err(f, e))?;
            parts.push_str(&format!("{}:{}\n", f.display(), sha256_hex(text.as_bytes())));
            sources.push((f.clone(), text));
        }
        let defaults = serde_json::to_string(&self.config.ingest.time_controls).unwrap_or_default();
        let input_hash = self.input_hash(STAGE, &[("files", &sha256_hex(parts.as_bytes())), ("time_controls", &defaults)]);
        if let Some(done) = self.up_to_date(STAGE, &input_hash) {
            return Ok(done);
        }
        let started = now();
        let mut games: Vec<GameRecord> = Vec::new();
        let mut seen = BTreeSet::new();
        let mut diagnostics = String::new();
        let mut n_diag = 0usize;
        let mut duplicates = 0usize;
        for (file, text) in &sources {
            let parsed = parse_pgn_with(text, &self.config.ingest.time_controls);
            for d in &parsed.diagnostics {
                n_diag += 1;
                diagnostics.push_str(&format!("{}:{}: {}\n", file.display(), d.line, d.error));
            }
            for g in parsed.games {
                if seen.insert(g.game_id.clone()) {
                    games.push(g);
                } else {
                    duplicates += 1;
                    diagnostics.push_str(&format!("{}: duplicate game {} skipped\n", file.display(), g.game_id));
                }
            }
        }
        if games.is_empty() {
            return Err(PipelineError::NoGames(described));
        }
        let mut jsonl = String::new();
        for g in &games {
            jsonl.push_str(&serde_json::to_string(g).map_err(|e| PipelineError::Io(e.to_string()))?);
            jsonl.push('\n');
        }
        let mut artifacts = self.write_data(GAMES_FILE, jsonl.as_bytes())?;
        artifacts.push(self.write_text(INGEST_DIAGNOSTICS, &diagnostics)?);
        let plies: usize = games.iter().map(|g| g.moves.len()).sum();
        let counts = BTreeMap::from([
            ("files".to_string(), files.len() as f64),
            ("games".to_string(), games.len() as f64),
            ("plies".to_string(), plies as f64),
            ("diagnostics".to_string(), n_diag as f64),
            ("duplicates".to_string(), duplicates as f64),
        ]);
        let lines = vec![format!(
            "ingest: {} games, {plies} plies from {} files ({n_diag} diagnostics, {duplicates} duplicates)",
            games.len(),
            files.len()
        )];
        self.record(STAGE, input_hash, started, artifacts, counts, lines)
    }

    fn engine_configs(&self) -> Result<(EngineConfig, EngineConfig), PipelineError> {
        let e = &self.config.engines;
        validate_engine_pair(&e.super_engine, &e.restricted).map_err(|err| PipelineError::Config(err.to_string()))?;
        Ok((e.super_engine.clone(), e.restricted.clone()))
    }

    fn cache(&self) -> Result<Arc<EvalCache>, PipelineError> {
        EvalCache::open(self.path(CACHE_DIR))
            .map(Arc::new)
            .map_err(|e| PipelineError::Io(e.to_string()))
    }

    /// Analyses every eligible position with both engines, then the
    /// after-move positions of moves outside the super engine's lines.
    /// Results land in the cache as they complete, so an interrupted run
    /// resumes where it stopped.
    pub fn evaluate(&mut self) -> Result<StageOutcome, PipelineError> {
        const STAGE: &str = "evaluate";
        let (games, games_hash) = self.load_games()?;
        let (sup, res) = self.engine_configs()?;
        let engine_json = serde_json::to_string(&(&sup.engine_tag, sup.depth_limit, sup.multipv, &res.engine_tag, res.depth_limit, res.multipv))
            .unwrap_or_default();
        let filter_json = serde_json::to_string(&self.config.filter).unwrap_or_default();
        let input_hash = self.input_hash(STAGE, &[("games", &games_hash), ("engines", &engine_json), ("filter", &filter_json)]);
        let started = now();
        let cache = self.cache()?;

        let mut fens = Vec::new();
        let mut seen = BTreeSet::new();
        for g in &games {
            for mv in eligible_moves(g, &self.config.filter) {
                if seen.insert(mv.fen_before.clone()) {
                    fens.push(mv.fen_before.clone());
                }
            }
        }

        let mut pools = Pools::new(sup.clone(), res.clone(), self.workers, cache.clone());
        let mut failures = Vec::new();
        pools.run(&mut failures, Role::Super, &fens)?;
        pools.run(&mut failures, Role::Restricted, &fens)?;

        let cached = CachedEvaluations {
            cache: cache.clone(),
            super_engine: sup.clone(),
            restricted_engine: res.clone(),
        };
        let mut after = Vec::new();
        let mut after_seen = BTreeSet::new();
        for g in &games {
            for mv in eligible_moves(g, &self.config.filter) {
                let (Ok(se), Ok(re)) = (cached.super_eval(&mv.fen_before), cached.restricted_eval(&mv.fen_before)) else {
                    continue;
                };
                match required_after_positions(&se, &[mv.uci.as_str(), re.bestmove.as_str()]) {
                    Ok(ps) => {
                        for p in ps {
                            if after_seen.insert(p.clone()) {
                                after.push(p);
                            }
                        }
                    }
                    Err(e) => log::warn!("game {} ply {}: {e}", g.game_id, mv.ply),
                }
            }
        }
        pools.run(&mut failures, Role::Super, &after)?;
        let (calls, hits) = pools.stats();
        let mut lines = vec![format!(
            "evaluate: {} positions, {} after-move positions, {calls} engine calls, {hits} cache hits",
            fens.len(),
            after.len()
        )];
        if !failures.is_empty() {
            for f in failures.iter().take(5) {
                log::error!("{f}");
            }
            return Err(PipelineError::stage(
                STAGE,
                format!(
                    "{} evaluations failed (first: {}); completed results are cached, re-run to resume",
                    failures.len(),
                    failures[0]
                ),
            ));
        }
        self.manifest.engine_tags = cached.engine_tags();
        self.manifest.engine_names = pools.names();
        let summary = EvaluationSummary {
            games_hash,
            engine_tags: cached.engine_tags(),
            positions: fens.len(),
            after_positions: after.len(),
            engine_calls: calls,
            cache_hits: hits,
            failures: 0,
        };
        let artifacts = vec![self.write_json(EVALUATION_SUMMARY, &summary)?];
        let counts = BTreeMap::from([
            ("positions".to_string(), fens.len() as f64),
            ("after_positions".to_string(), after.len() as f64),
            ("engine_calls".to_string(), calls as f64),
            ("cache_hits".to_string(), hits as f64),
        ]);
        if calls == 0 {
            lines.push("evaluate: every evaluation served from the cache".into());
        }
        self.record(STAGE, input_hash, started, artifacts, counts, lines)
    }

    /// Builds the move-level panel from cached evaluations.
    pub fn measures(&mut self) -> Result<StageOutcome, PipelineError> {
        const STAGE: &str = "measures";
        let (games, games_hash) = self.load_games()?;
        let eval_hash = self.require("evaluate", EVALUATION_SUMMARY)?;
        let filter_json = serde_json::to_string(&self.config.filter).unwrap_or_default();
        let share = self.config.max_failure_share.to_string();
        let input_hash = self.input_hash(
            STAGE,
            &[("games", &games_hash), ("evaluate", &eval_hash), ("filter", &filter_json), ("failure_share", &share)],
        );
        if let Some(done) = self.up_to_date(STAGE, &input_hash) {
            return Ok(done);
        }
        let started = now();
        let (sup, res) = self.engine_configs()?;
        let source = CachedEvaluations {
            cache: self.cache()?,
            super_engine: sup,
            restricted_engine: res,
        };
        let opts = BuildOptions {
            filter: self.config.filter.clone(),
            choice: MoveChoice::Human,
            max_failure_share: self.config.max_failure_share,
        };
        let dataset = build_dataset(&games, &source, &opts).map_err(|e| PipelineError::stage(STAGE, e))?;
        if dataset.rows.is_empty() {
            return Err(PipelineError::EmptyDataset);
        }
        let mut csv = Vec::new();
        write_dataset(&mut csv, &dataset.rows).map_err(|e| PipelineError::stage(STAGE, e))?;
        let mut artifacts = self.write_data(DATASET_FILE, &csv)?;
        let dataset_hash = artifacts[0].sha256.clone();
        #[derive(Serialize)]
        struct Body<'a> {
            dataset_hash: &'a str,
            #[serde(flatten)]
            manifest: &'a DatasetManifest,
        }
        artifacts.push(self.write_json(
            DATASET_MANIFEST,
            &Body {
                dataset_hash: &dataset_hash,
                manifest: &dataset.manifest,
            },
        )?);
        self.manifest.dataset_hash = Some(dataset_hash);
        let m = &dataset.manifest;
        let share_zero = m.share_delta_zero.unwrap_or(0.0);
        let counts = BTreeMap::from([
            ("games_used".to_string(), m.games_used as f64),
            ("rows".to_string(), m.rows as f64),
            ("rows_attempted".to_string(), m.rows_attempted as f64),
            ("rows_failed".to_string(), m.rows_failed as f64),
            ("share_delta_zero".to_string(), share_zero),
        ]);
        let lines = vec![format!(
            "measures: {} rows from {} games ({} failed), share with delta = 0: {:.3}",
            m.rows, m.games_used, m.rows_failed, share_zero
        )];
        self.record(STAGE, input_hash, started, artifacts, counts, lines)
    }

    /// Estimates the named tables (configured tables first, then built-ins).
    pub fn regress(&mut self, tables: &[String]) -> Result<StageOutcome, PipelineError> {
        const STAGE: &str = "regress";
        let tables = if tables.is_empty() {
            self.config.regress.tables.clone()
        } else {
            tables.to_vec()
        };
        let resolved = tables
            .iter()
            .map(|t| {
                self.config
                    .table(t)
                    .ok_or_else(|| PipelineError::Config(format!("unknown table '{t}'")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (frame, dataset_hash) = self.load_frame()?;
        let spec_json = serde_json::to_string(&(&resolved, self.config.regress.decomposition)).unwrap_or_default();
        let input_hash = self.input_hash(STAGE, &[("dataset", &dataset_hash), ("tables", &spec_json)]);
        if let Some(done) = self.up_to_date(STAGE, &input_hash) {
            return Ok(done);
        }
        let started = now();
        let mut artifacts = Vec::new();
        let mut lines = Vec::new();
        let mut counts = BTreeMap::new();
        for table in &resolved {
            let mut fits = Vec::new();
            for spec in &table.specs {
                let fit = crate::econometrics::fit_model(&frame, spec)
                    .map_err(|e| PipelineError::stage(STAGE, format!("{} ({}): {e}", table.name, spec.outcome)))?;
                fits.push(fit);
            }
            let csv = results_csv(&table.name, &fits).map_err(|e| PipelineError::stage(STAGE, e))?;
            artifacts.extend(self.write_data(&format!("{RESULTS_DIR}/{}.csv", table.name), csv.as_bytes())?);
            artifacts.push(self.write_text(&format!("{RESULTS_DIR}/{}.txt", table.name), &render_table(&table.title, &fits))?);
            artifacts.push(self.write_json(
                &format!("{RESULTS_DIR}/{}.json", table.name),
                &TableResults {
                    table: table.name.clone(),
                    title: table.title.clone(),
                    dataset_hash: dataset_hash.clone(),
                    fits: fits.clone(),
                },
            )?);
            counts.insert(format!("{}.models", table.name), fits.len() as f64);
            lines.push(format!("regress: {} ({} models)", table.name, fits.len()));
        }
        if self.config.regress.decomposition {
            let spec = self
                .config
                .table("decomposition")
                .and_then(|t| t.specs.into_iter().next())
                .ok_or_else(|| PipelineError::Config("no decomposition specification".into()))?;
            let d = decomposition(&frame, &spec).map_err(|e| PipelineError::stage(STAGE, format!("decomposition: {e}")))?;
            artifacts.push(self.write_text(&format!("{RESULTS_DIR}/decomposition.txt"), &render_decomposition(&d))?);
            artifacts.push(self.write_json(&format!("{RESULTS_DIR}/decomposition.json"), &d)?);
            lines.push("regress: margin decomposition".into());
        }
        self.record(STAGE, input_hash, started, artifacts, counts, lines)
    }

    /// Replicated simulation with known deviation margins.
    pub fn simulate(&mut self, opts: &SimulateOptions, seed: Option<u64>) -> Result<StageOutcome, PipelineError> {
        const STAGE: &str = "simulate";
        let mut sim = self.config.simulation.sim.clone();
        if let Some(s) = seed {
            sim.seed = s;
        }
        if let Some(r) = opts.replications {
            sim.n_replications = r;
        }
        let mut agent = self.config.agent()?;
        if let Some(name) = &opts.agent {
            agent = crate::simulator::AgentSpec::by_name(name)
                .ok_or_else(|| PipelineError::Config(format!("unknown agent '{name}'")))?;
        }
        let mut template_hash = String::new();
        if self.config.simulation.use_dataset_covariates {
            template_hash = self.require("measures", DATASET_FILE)?;
            let path = self.path(DATASET_FILE);
            let file = fs::File::open(&path).map_err(|e| io_err(&path, e))?;
            let rows = read_dataset(file).map_err(|e| io_err(&path, e))?;
            sim.covariates = CovariateSource::Template(rows);
        }
        let sim_json = serde_json::to_string(&(&sim, &agent)).unwrap_or_default();
        let input_hash = self.input_hash(STAGE, &[("simulation", &sim_json), ("template", &template_hash)]);
        if let Some(done) = self.up_to_date(STAGE, &input_hash) {
            return Ok(done);
        }
        let started = now();
        let report: ValidationReport =
            validate_identification(&sim, &agent).map_err(|e| PipelineError::stage(STAGE, e))?;
        let panel = simulate_panel(&sim, &agent, 0).map_err(|e| PipelineError::stage(STAGE, e))?;
        let mut csv = Vec::new();
        write_dataset(&mut csv, &panel.rows).map_err(|e| PipelineError::stage(STAGE, e))?;
        let mut artifacts = self.write_data(&format!("{SIM_DIR}/panel_replication0.csv"), &csv)?;
        artifacts.push(self.write_json(&format!("{SIM_DIR}/validation.json"), &report)?);
        let text = report.render();
        artifacts.push(self.write_text(&format!("{SIM_DIR}/validation.txt"), &text)?);
        let counts = BTreeMap::from([
            ("replications".to_string(), report.replications as f64),
            ("null_oracle_passed".to_string(), f64::from(u8::from(report.null_oracle_passed))),
            ("identities_hold".to_string(), f64::from(u8::from(report.identities_hold))),
        ]);
        let lines = text.lines().map(str::to_string).collect();
        if !report.null_oracle_passed {
            return Err(PipelineError::stage(STAGE, "null-deviation oracle failed"));
        }
        self.record(STAGE, input_hash, started, artifacts, counts, lines)
    }

    /// Collects tables into one text report and writes binned-effect plot data.
    pub fn report(&mut self) -> Result<StageOutcome, PipelineError> {
        const STAGE: &str = "report";
        let regress = self
            .manifest
            .stages
            .get("regress")
            .cloned()
            .ok_or_else(|| PipelineError::MissingArtifact {
                stage: "regress".into(),
                path: self.path(RESULTS_DIR).display().to_string(),
            })?;
        for a in &regress.artifacts {
            if !self.path(&a.path).exists() {
                return Err(PipelineError::MissingArtifact {
                    stage: "regress".into(),
                    path: self.path(&a.path).display().to_string(),
                });
            }
        }
        let (frame, dataset_hash) = self.load_frame()?;
        let sim_hash = self
            .manifest
            .artifact_hash("simulate", &format!("{SIM_DIR}/validation.txt"))
            .unwrap_or("")
            .to_string();
        let binned_json = serde_json::to_string(&self.config.report.binned).unwrap_or_default();
        let input_hash = self.input_hash(
            STAGE,
            &[("regress", &regress.input_hash), ("dataset", &dataset_hash), ("binned", &binned_json), ("simulate", &sim_hash)],
        );
        if let Some(done) = self.up_to_date(STAGE, &input_hash) {
            return Ok(done);
        }
        let started = now();
        let mut text = String::new();
        let mut table_files: Vec<&ArtifactRecord> = regress
            .artifacts
            .iter()
            .filter(|a| a.path.ends_with(".json") && !a.path.ends_with(".meta.json"))
            .collect();
        table_files.sort_by(|a, b| a.path.cmp(&b.path));
        let mut n_tables = 0;
        for a in table_files {
            if a.path.ends_with("decomposition.json") {
                continue;
            }
            let path = self.path(&a.path);
            let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
            let t: Stamped<TableResults> = serde_json::from_slice(&bytes).map_err(|e| io_err(&path, e))?;
            text.push_str(&render_table(&t.body.title, &t.body.fits));
            text.push('\n');
            n_tables += 1;
        }
        let decomposition_txt = self.path(&format!("{RESULTS_DIR}/decomposition.txt"));
        if regress.artifacts.iter().any(|a| a.path.ends_with("decomposition.txt")) {
            let d = fs::read_to_string(&decomposition_txt).map_err(|e| io_err(&decomposition_txt, e))?;
            text.push_str(d.split_once("\n\n").map_or(d.as_str(), |(_, body)| body));
            text.push('\n');
        }
        let mut artifacts = Vec::new();
        let mut n_binned = 0;
        for spec in &self.config.report.binned {
            match binned_effects(&frame, spec) {
                Ok(b) => {
                    let name = format!("{REPORT_DIR}/binned_{}_{}.csv", spec.outcome, spec.variable);
                    artifacts.extend(self.write_data(&name, b.plot_csv().as_bytes())?);
                    text.push_str(&render_binned(&b));
                    text.push('\n');
                    n_binned += 1;
                }
                Err(e) => {
                    log::warn!("binned effects of {} on {}: {e}", spec.outcome, spec.variable);
                    text.push_str(&format!("Binned effects of {} on {}: not estimable ({e})\n\n", spec.outcome, spec.variable));
                }
            }
        }
        if !sim_hash.is_empty() {
            let p = self.path(&format!("{SIM_DIR}/validation.txt"));
            let v = fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
            text.push_str(v.split_once("\n\n").map_or(v.as_str(), |(_, body)| body));
        }
        artifacts.push(self.write_text(&format!("{REPORT_DIR}/report.txt"), &text)?);
        let counts = BTreeMap::from([
            ("tables".to_string(), n_tables as f64),
            ("binned".to_string(), n_binned as f64),
        ]);
        let lines = vec![format!(
            "report: {n_tables} tables, {n_binned} binned plots in {}",
            self.path(REPORT_DIR).display()
        )];
        self.record(STAGE, input_hash, started, artifacts, counts, lines)
    }
}

#[derive(Clone, Copy)]
enum Role {
    Super,
    Restricted,
}

/// Engine pools started on first use.
struct Pools {
    configs: [EngineConfig; 2],
    workers: usize,
    cache: Arc<EvalCache>,
    pools: [Option<EnginePool>; 2],
}

impl Pools {
    fn new(sup: EngineConfig, res: EngineConfig, workers: usize, cache: Arc<EvalCache>) -> Self {
        Self {
            configs: [sup, res],
            workers,
            cache,
            pools: [None, None],
        }
    }

    /// Evaluates the positions of `fens` missing from the cache.
    fn run(&mut self, failures: &mut Vec<String>, role: Role, fens: &[String]) -> Result<(), PipelineError> {
        let i = role as usize;
        let cfg = &self.configs[i];
        let missing: Vec<String> = fens
            .iter()
            .filter(|f| !self.cache.contains(&CacheKey::new(f, &cfg.engine_tag, cfg.depth_limit, cfg.multipv)))
            .cloned()
            .collect();
        if missing.is_empty() {
            return Ok(());
        }
        if self.pools[i].is_none() {
            let pool = start_pool(cfg.clone(), self.workers)
                .map_err(|e| PipelineError::stage("evaluate", format!("starting {:?} engine: {e}", cfg.role)))?
                .with_cache(self.cache.clone());
            self.pools[i] = Some(pool);
        }
        let pool = self.pools[i].as_ref().expect("started");
        for (fen, r) in missing.iter().zip(pool.evaluate_many(&missing)) {
            if let Err(e) = r {
                failures.push(format!("{fen}: {e}"));
            }
        }
        Ok(())
    }

    fn stats(&self) -> (u64, u64) {
        self.pools.iter().flatten().fold((0, 0), |(c, h), p| {
            (c + p.stats().engine_calls(), h + p.stats().cache_hits())
        })
    }

    fn names(&self) -> Vec<String> {
        self.pools
            .iter()
            .flatten()
            .filter_map(|p| p.engine_name().map(str::to_string))
            .collect()
    }
}
