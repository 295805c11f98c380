//! On-disk run directories: configuration, logs, policies and fronts.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::front::FrontPoint;
use super::ExperimentError;
use crate::costs::CostScales;
use crate::dqn::{QEnsemble, TrainConfig};
use crate::env::{Action, EnvConfig, Observation, ObservationMode, Policy};
use crate::nsga2::Nsga2Config;
use crate::params::ParameterSet;
use crate::policy::{act_greedy, PolicyParams};
use crate::seirah::Staircase;

pub const CONFIG_FILE: &str = "config.json";
pub const LOG_FILE: &str = "log.csv";
pub const POLICY_DIR: &str = "policies";
pub const FRONT_FILE: &str = "pareto_final.json";
pub const EVALUATIONS_FILE: &str = "evaluations.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Dqn,
    GoalDqn,
    GoalDqnC,
    Nsga2,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Dqn, Algorithm::GoalDqn, Algorithm::GoalDqnC, Algorithm::Nsga2];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Dqn => "dqn",
            Algorithm::GoalDqn => "goal_dqn",
            Algorithm::GoalDqnC => "goal_dqn_c",
            Algorithm::Nsga2 => "nsga2",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = ExperimentError;

    /// Accepts both `goal_dqn_c` and `goal-dqn-c` spellings.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == norm)
            .ok_or_else(|| ExperimentError::UnknownAlgorithm(s.to_string()))
    }
}

/// Evenly spaced β grid from 0 to 1 in steps of 0.05.
pub fn default_dqn_betas() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// Everything a run needs besides the algorithm and seed. Missing fields take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub params: ParameterSet,
    pub scales: CostScales,
    pub staircase: Staircase,
    pub train: TrainConfig,
    pub nsga2: Nsga2Config,
    /// One fixed-β learner is trained per value.
    pub dqn_betas: Vec<f64>,
    /// Episodes per evaluated front point.
    pub front_episodes: usize,
    /// Goals evaluated when sweeping a goal-conditioned policy.
    pub sweep_goals: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: ParameterSet::default(),
            scales: CostScales::default(),
            staircase: Staircase::default(),
            train: TrainConfig::default(),
            nsga2: Nsga2Config::default(),
            dqn_betas: default_dqn_betas(),
            front_episodes: 30,
            sweep_goals: 100,
        }
    }
}

impl RunConfig {
    pub fn env(&self, mode: ObservationMode) -> EnvConfig {
        let mut env = EnvConfig::standard(self.params, mode);
        env.scales = self.scales;
        env.staircase = self.staircase;
        env
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if self.dqn_betas.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return bad("dqn_betas must lie in [0, 1]");
        }
        if self.front_episodes == 0 || self.sweep_goals == 0 {
            return bad("front_episodes and sweep_goals must be positive");
        }
        self.params.model.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        self.train.validate()?;
        self.nsga2.validate()?;
        Ok(())
    }
}

/// Contents of `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub params_digest: String,
    pub config: RunConfig,
}

/// A stored policy. Fixed-β and evolved networks act on base observations;
/// goal-conditioned ensembles on goal (or constrained) observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyFile {
    FixedBeta { beta: f64, q: PolicyParams },
    Goal(QEnsemble),
    Evolved { q: PolicyParams },
}

impl PolicyFile {
    pub fn observation_mode(&self) -> ObservationMode {
        match self {
            PolicyFile::Goal(e) if e.is_constrained() => ObservationMode::Constrained,
            PolicyFile::Goal(_) => ObservationMode::Goal,
            _ => ObservationMode::Base,
        }
    }

    pub fn is_goal_conditioned(&self) -> bool {
        matches!(self, PolicyFile::Goal(_))
    }

    pub fn is_constrained(&self) -> bool {
        matches!(self, PolicyFile::Goal(e) if e.is_constrained())
    }

    /// β used for the aggregated cost column when the caller supplies none.
    pub fn default_beta(&self) -> f64 {
        match self {
            PolicyFile::FixedBeta { beta, .. } => *beta,
            _ => 0.5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PolicyFile::FixedBeta { .. } => "fixed_beta",
            PolicyFile::Goal(e) if e.is_constrained() => "goal_constrained",
            PolicyFile::Goal(_) => "goal",
            PolicyFile::Evolved { .. } => "evolved",
        }
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        read_json(path)
    }
}

impl Policy for PolicyFile {
    fn act(&self, obs: &Observation) -> Action {
        match self {
            PolicyFile::FixedBeta { q, .. } | PolicyFile::Evolved { q } => {
                act_greedy(&q.forward(&obs.features()).expect("observation matches network input"))
            }
            PolicyFile::Goal(e) => e.act(obs),
        }
    }
}

/// One row of `log.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub policy: String,
    pub step: u64,
    pub eval_health_mean: f64,
    pub eval_eco_mean: f64,
    pub loss: Option<f64>,
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Json(path.display().to_string(), e))
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ExperimentError::Json(path.display().to_string(), e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| ExperimentError::io(path, e))
}

#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunArtifact {
    /// Creates the directory and writes `config.json`; refuses to reuse a run directory.
    pub fn create(dir: &Path, algorithm: Algorithm, seed: u64, config: RunConfig) -> Result<Self, ExperimentError> {
        if dir.join(CONFIG_FILE).exists() {
            return Err(ExperimentError::AlreadyExists(dir.display().to_string()));
        }
        fs::create_dir_all(dir.join(POLICY_DIR)).map_err(|e| ExperimentError::io(dir, e))?;
        let run_id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("{algorithm}-{seed}"));
        let manifest = RunManifest {
            run_id,
            algorithm,
            seed,
            params_digest: config.params.digest(),
            config,
        };
        write_json(&dir.join(CONFIG_FILE), &manifest)?;
        Ok(RunArtifact {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn load(dir: &Path) -> Result<Self, ExperimentError> {
        let path = dir.join(CONFIG_FILE);
        if !path.exists() {
            return Err(ExperimentError::MissingArtifact(path.display().to_string()));
        }
        let mut manifest: RunManifest = read_json(&path)?;
        // The directory name is authoritative for ids of copied runs.
        if let Some(name) = dir.file_name() {
            manifest.run_id = name.to_string_lossy().into_owned();
        }
        Ok(RunArtifact {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn id(&self) -> &str {
        &self.manifest.run_id
    }

    pub fn algorithm(&self) -> Algorithm {
        self.manifest.algorithm
    }

    pub fn env(&self, mode: ObservationMode) -> EnvConfig {
        self.manifest.config.env(mode)
    }

    fn policy_path(&self, name: &str) -> Result<PathBuf, ExperimentError> {
        let valid = !name.is_empty()
            && name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
            && !name.starts_with('.');
        if !valid {
            return Err(ExperimentError::MissingArtifact(format!("policy {name:?}")));
        }
        Ok(self.dir.join(POLICY_DIR).join(format!("{name}.json")))
    }

    pub fn write_policy(&self, name: &str, policy: &PolicyFile) -> Result<(), ExperimentError> {
        write_json(&self.policy_path(name)?, policy)
    }

    pub fn load_policy(&self, name: &str) -> Result<PolicyFile, ExperimentError> {
        let path = self.policy_path(name)?;
        if !path.exists() {
            return Err(ExperimentError::MissingArtifact(format!("policy {name:?} in run {}", self.id())));
        }
        read_json(&path)
    }

    /// Stored policy names, sorted.
    pub fn policy_names(&self) -> Result<Vec<String>, ExperimentError> {
        let dir = self.dir.join(POLICY_DIR);
        let mut names = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| ExperimentError::io(&dir, e))? {
            let path = entry.map_err(|e| ExperimentError::io(&dir, e))?.path();
            if path.extension().is_some_and(|x| x == "json") {
                if let Some(stem) = path.file_stem() {
                    names.push(stem.to_string_lossy().into_owned());
                }
            }
        }
        names.sort();
        Ok(names)
    }

    pub fn write_log(&self, lines: &[LogLine]) -> Result<(), ExperimentError> {
        let path = self.dir.join(LOG_FILE);
        let mut w = csv::Writer::from_path(&path).map_err(|e| ExperimentError::Csv(path.display().to_string(), e))?;
        for line in lines {
            w.serialize(line).map_err(|e| ExperimentError::Csv(path.display().to_string(), e))?;
        }
        w.flush().map_err(|e| ExperimentError::io(&path, e))
    }

    pub fn read_log(&self) -> Result<Vec<LogLine>, ExperimentError> {
        let path = self.dir.join(LOG_FILE);
        let mut r = csv::Reader::from_path(&path).map_err(|e| ExperimentError::Csv(path.display().to_string(), e))?;
        r.deserialize()
            .collect::<Result<Vec<LogLine>, _>>()
            .map_err(|e| ExperimentError::Csv(path.display().to_string(), e))
    }

    pub fn write_points(&self, file: &str, points: &[FrontPoint]) -> Result<(), ExperimentError> {
        write_json(&self.dir.join(file), points)
    }

    pub fn read_points(&self, file: &str) -> Result<Vec<FrontPoint>, ExperimentError> {
        let path = self.dir.join(file);
        if !path.exists() {
            return Err(ExperimentError::MissingArtifact(path.display().to_string()));
        }
        read_json(&path)
    }

    pub fn front_points(&self) -> Result<Vec<FrontPoint>, ExperimentError> {
        self.read_points(FRONT_FILE)
    }
}

/// Run directories directly under `root`, sorted by id.
pub fn list_runs(root: &Path) -> Result<Vec<RunArtifact>, ExperimentError> {
    let mut runs = Vec::new();
    if !root.exists() {
        return Ok(runs);
    }
    for entry in fs::read_dir(root).map_err(|e| ExperimentError::io(root, e))? {
        let path = entry.map_err(|e| ExperimentError::io(root, e))?.path();
        if path.join(CONFIG_FILE).is_file() {
            runs.push(RunArtifact::load(&path)?);
        }
    }
    runs.sort_by(|a, b| a.id().cmp(b.id()));
    Ok(runs)
}
