use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::econometrics::{BinnedSpec, ModelSpec};
use crate::engine::{EngineConfig, EngineRole};
use crate::measures::DatasetFilter;
use crate::pgn::TimeControlDefaults;
use crate::simulator::{AgentSpec, SimConfig};

/// Overrides both engine binaries.
pub const ENV_ENGINE: &str = "BOUNDBENCH_ENGINE";
pub const ENV_SUPER_ENGINE: &str = "BOUNDBENCH_SUPER_ENGINE";
pub const ENV_RESTRICTED_ENGINE: &str = "BOUNDBENCH_RESTRICTED_ENGINE";

fn default_engine_path() -> PathBuf {
    PathBuf::from("scripts/stockfish-wasm")
}

fn super_default() -> EngineConfig {
    EngineConfig::new(default_engine_path(), EngineRole::Super, 12, 6, "stockfish-wasm")
}

fn restricted_default() -> EngineConfig {
    EngineConfig::new(default_engine_path(), EngineRole::Restricted, 6, 1, "stockfish-wasm")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnginesConfig {
    #[serde(rename = "super", default = "super_default")]
    pub super_engine: EngineConfig,
    #[serde(default = "restricted_default")]
    pub restricted: EngineConfig,
    /// Engine sessions per pool.
    #[serde(default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

impl Default for EnginesConfig {
    fn default() -> Self {
        Self {
            super_engine: super_default(),
            restricted: restricted_default(),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IngestConfig {
    /// Files or directories (scanned for `*.pgn`) used when none are given
    /// on the command line.
    #[serde(default)]
    pub paths: Vec<PathBuf>,
    #[serde(default)]
    pub time_controls: TimeControlDefaults,
}

/// A named table of model specifications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableConfig {
    pub name: String,
    #[serde(default)]
    pub title: String,
    pub specs: Vec<ModelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressConfig {
    /// Tables estimated when `regress` is called without `--spec`.
    #[serde(default = "default_tables")]
    pub tables: Vec<String>,
    /// Also report the margin decomposition of the total effect.
    #[serde(default = "yes")]
    pub decomposition: bool,
}

fn default_tables() -> Vec<String> {
    vec!["table2".into()]
}

fn yes() -> bool {
    true
}

impl Default for RegressConfig {
    fn default() -> Self {
        Self {
            tables: default_tables(),
            decomposition: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    #[serde(flatten)]
    pub sim: SimConfig,
    /// Preset name used when no custom agent is given.
    pub agent: String,
    pub custom_agent: Option<AgentSpec>,
    /// Resample covariates from the run's dataset instead of generating them.
    pub use_dataset_covariates: bool,
}

fn null_agent() -> String {
    "null".into()
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            agent: null_agent(),
            custom_agent: None,
            use_dataset_covariates: false,
        }
    }
}

fn default_binned() -> Vec<BinnedSpec> {
    let controls = |skip: &str| -> Vec<String> {
        ["better_pos", "worse_pos", "remaining_time_hours", "num_previous_moves", "complexity_seconds"]
            .iter()
            .filter(|c| match skip {
                "standing_pawnunits" => **c != "better_pos" && **c != "worse_pos",
                other => **c != other,
            })
            .map(|c| c.to_string())
            .collect()
    };
    ["standing_pawnunits", "remaining_time_hours", "num_previous_moves", "complexity_seconds"]
        .iter()
        .map(|v| BinnedSpec {
            outcome: "delta_C".into(),
            variable: v.to_string(),
            n_bins: 5,
            reference: if *v == "standing_pawnunits" { 2 } else { 0 },
            controls: controls(v),
            fixed_effects: true,
            range: (*v == "standing_pawnunits").then_some([-3.0, 3.0]),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    /// Binned-effect specifications for plot data.
    #[serde(default = "default_binned")]
    pub binned: Vec<BinnedSpec>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            binned: default_binned(),
        }
    }
}

/// Everything a run needs, read from one TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub engines: EnginesConfig,
    #[serde(default)]
    pub filter: DatasetFilter,
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default)]
    pub tables: Vec<TableConfig>,
    #[serde(default)]
    pub regress: RegressConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub report: ReportConfig,
    /// Maximum share of failed rows before the measures stage aborts.
    #[serde(default = "default_failure_share")]
    pub max_failure_share: f64,
}

fn default_failure_share() -> f64 {
    0.10
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            engines: EnginesConfig::default(),
            filter: DatasetFilter::default(),
            ingest: IngestConfig::default(),
            tables: Vec::new(),
            regress: RegressConfig::default(),
            simulation: SimulationConfig::default(),
            report: ReportConfig::default(),
            max_failure_share: default_failure_share(),
        }
    }
}

impl PipelineConfig {
    /// Reads `path`, resolving relative engine and input paths against the
    /// file's directory, then applies environment overrides.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_relative(base);
        cfg.apply_env();
        Ok(cfg)
    }

    /// Defaults with engine paths relative to `base`.
    pub fn defaults_at(base: &Path) -> Self {
        let mut cfg = PipelineConfig::default();
        cfg.resolve_relative(base);
        cfg.apply_env();
        cfg
    }

    fn resolve_relative(&mut self, base: &Path) {
        for e in [&mut self.engines.super_engine, &mut self.engines.restricted] {
            if e.binary_path.is_relative() && e.binary_path.components().count() > 1 {
                e.binary_path = base.join(&e.binary_path);
            }
        }
        for p in &mut self.ingest.paths {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Engine paths from the environment take precedence.
    pub fn apply_env(&mut self) {
        let both = std::env::var_os(ENV_ENGINE).map(PathBuf::from);
        if let Some(p) = std::env::var_os(ENV_SUPER_ENGINE).map(PathBuf::from).or_else(|| both.clone()) {
            self.engines.super_engine.binary_path = p;
        }
        if let Some(p) = std::env::var_os(ENV_RESTRICTED_ENGINE).map(PathBuf::from).or(both) {
            self.engines.restricted.binary_path = p;
        }
    }

    pub fn to_toml(&self) -> Result<String, PipelineError> {
        toml::to_string(self).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// The named table: config tables first, then built-ins.
    pub fn table(&self, name: &str) -> Option<TableConfig> {
        if let Some(t) = self.tables.iter().find(|t| t.name == name) {
            return Some(t.clone());
        }
        crate::econometrics::builtin(name).map(|b| TableConfig {
            name: b.name.to_string(),
            title: b.title.to_string(),
            specs: b.specs,
        })
    }

    pub fn agent(&self) -> Result<AgentSpec, PipelineError> {
        if let Some(a) = &self.simulation.custom_agent {
            return Ok(a.clone());
        }
        AgentSpec::by_name(&self.simulation.agent)
            .ok_or_else(|| PipelineError::Config(format!("unknown agent '{}'", self.simulation.agent)))
    }
}
