//! The weekly lockdown decision environment.
//!
//! Each episode samples a model instance and an onset delay, then runs 52
//! weekly decisions. The horizon is a time limit, not a terminal state: the
//! final step reports `timeout` so learners keep bootstrapping, and the week
//! index never appears in the observation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costs::{
    self, ConstraintSpec, CostError, CostScales, CostSnapshot, MixingWeight, Violations,
    DEATH_BOUND_RANGE, ECO_BOUND_RANGE,
};
use crate::params::ParameterSet;
use crate::seirah::{
    self, ModelDistribution, ModelError, Rk4, SeirahParams, SeirahState, Staircase,
    TransmissionLevel,
};

pub const HORIZON_WEEKS: usize = 52;
pub const DAYS_PER_WEEK: usize = 7;
/// Normalizer of the cumulative economic cost feature (€).
pub const ECO_OBS_SCALE: f64 = 150e9;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("step called before reset")]
    NotReset,
    #[error("episode already finished after {0} weeks")]
    StepAfterDone(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("need at least one evaluation episode")]
    NoEpisodes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Action {
    NoLockdown,
    Lockdown,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::NoLockdown, Action::Lockdown];

    pub fn index(self) -> usize {
        match self {
            Action::NoLockdown => 0,
            Action::Lockdown => 1,
        }
    }

    pub fn from_index(i: usize) -> Action {
        if i == 0 {
            Action::NoLockdown
        } else {
            Action::Lockdown
        }
    }

    pub fn is_lockdown(self) -> bool {
        self == Action::Lockdown
    }
}

impl From<Action> for u8 {
    fn from(a: Action) -> u8 {
        a.index() as u8
    }
}

impl TryFrom<u8> for Action {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Action::NoLockdown),
            1 => Ok(Action::Lockdown),
            other => Err(format!("action must be 0 or 1, got {other}")),
        }
    }
}

/// What the agent is asked to optimize during an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub beta: MixingWeight,
    #[serde(default)]
    pub constraints: ConstraintSpec,
}

impl Goal {
    pub fn beta(beta: f64) -> Result<Goal, CostError> {
        Ok(Goal {
            beta: MixingWeight::new(beta)?,
            constraints: ConstraintSpec::none(),
        })
    }

    pub fn with_constraints(mut self, constraints: ConstraintSpec) -> Goal {
        self.constraints = constraints;
        self
    }
}

/// Which goal features are appended to the 11 base features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    #[default]
    Base,
    /// Adds β.
    Goal,
    /// Adds β, both normalized bounds and both normalized remaining budgets.
    Constrained,
}

impl ObservationMode {
    pub fn dim(self) -> usize {
        match self {
            ObservationMode::Base => 11,
            ObservationMode::Goal => 12,
            ObservationMode::Constrained => 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintFeatures {
    pub death_bound: f64,
    pub eco_bound: f64,
    pub death_remaining: f64,
    pub eco_remaining: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalFeatures {
    pub beta: f64,
    pub constraint: Option<ConstraintFeatures>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// S, E, I, R, A, H divided by N.
    pub seirah_norm: [f64; 6],
    pub prev_lockdown: bool,
    pub curr_lockdown: bool,
    /// Cumulative deaths divided by N.
    pub health_cum_norm: f64,
    /// Cumulative € loss divided by 150e9.
    pub eco_cum_norm: f64,
    /// Staircase level divided by its maximum.
    pub level_norm: f64,
    pub goal: Option<GoalFeatures>,
}

impl Observation {
    pub fn features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(16);
        self.write_features(&mut out);
        out
    }

    pub fn write_features(&self, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.seirah_norm);
        out.push(f64::from(u8::from(self.prev_lockdown)));
        out.push(f64::from(u8::from(self.curr_lockdown)));
        out.push(self.health_cum_norm);
        out.push(self.eco_cum_norm);
        out.push(self.level_norm);
        if let Some(goal) = &self.goal {
            out.push(goal.beta);
            if let Some(c) = &goal.constraint {
                out.extend_from_slice(&[c.death_bound, c.eco_bound, c.death_remaining, c.eco_remaining]);
            }
        }
    }

    pub fn beta(&self) -> Option<f64> {
        self.goal.map(|g| g.beta)
    }
}

/// Static description of the environment; episodes differ only by seed and goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub params: ParameterSet,
    pub distribution: ModelDistribution,
    pub horizon_weeks: usize,
    pub scales: CostScales,
    pub mode: ObservationMode,
    pub staircase: Staircase,
    pub solver: Rk4,
}

impl EnvConfig {
    /// 10%-stdev model distribution around `params`, 52 weeks, balanced scales.
    pub fn standard(params: ParameterSet, mode: ObservationMode) -> Self {
        EnvConfig {
            params,
            distribution: ModelDistribution::standard(params.model),
            horizon_weeks: HORIZON_WEEKS,
            scales: CostScales::default(),
            mode,
            staircase: Staircase::default(),
            solver: Rk4::default(),
        }
    }

    pub fn with_mode(mut self, mode: ObservationMode) -> Self {
        self.mode = mode;
        self
    }
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::standard(ParameterSet::default(), ObservationMode::Base)
    }
}

/// One line of an exported trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeekRecord {
    /// Decision week, starting at 0.
    pub week: usize,
    pub action: Action,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "H")]
    pub h: f64,
    pub b_level: u8,
    pub health_step: f64,
    pub eco_step: f64,
    pub health_cum: f64,
    pub eco_cum: f64,
    pub aggregated: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub costs: CostSnapshot,
    pub violations: Violations,
    pub done: bool,
    /// Set only when `done` comes from the horizon. Never part of the observation.
    pub timeout: bool,
    pub record: WeekRecord,
}

#[derive(Debug, Clone)]
struct Episode {
    params: SeirahParams,
    onset_delay: f64,
    state: SeirahState,
    level: TransmissionLevel,
    prev_lockdown: bool,
    curr_lockdown: bool,
    health_cum: f64,
    eco_cum: f64,
    week: usize,
    goal: Goal,
}

#[derive(Debug, Clone)]
pub struct EpidemicEnv {
    config: EnvConfig,
    episode: Option<Episode>,
    daily: Vec<SeirahState>,
}

impl EpidemicEnv {
    pub fn new(config: EnvConfig) -> Self {
        EpidemicEnv {
            config,
            episode: None,
            daily: Vec::with_capacity(DAYS_PER_WEEK),
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Samples a fresh model and returns the first observation.
    pub fn reset(&mut self, seed: u64, goal: Goal) -> Result<Observation, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (params, onset_delay) = self.config.distribution.sample(&mut rng);
        let state = seirah::initial_state(
            &params,
            &self.config.params.init,
            onset_delay,
            &self.config.solver,
        )?;
        let episode = Episode {
            params,
            onset_delay,
            state,
            level: TransmissionLevel(0),
            prev_lockdown: false,
            curr_lockdown: false,
            health_cum: 0.0,
            eco_cum: 0.0,
            week: 0,
            goal,
        };
        let obs = self.observe(&episode);
        self.episode = Some(episode);
        Ok(obs)
    }

    /// Applies one weekly decision.
    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        let horizon = self.config.horizon_weeks;
        let cfg = self.config;
        let mut ep = self.episode.take().ok_or(EnvError::NotReset)?;
        if ep.week >= horizon {
            let week = ep.week;
            self.episode = Some(ep);
            return Err(EnvError::StepAfterDone(week));
        }

        let lockdown = action.is_lockdown();
        ep.prev_lockdown = ep.curr_lockdown;
        ep.curr_lockdown = lockdown;
        ep.level = cfg.staircase.update_level(ep.level, lockdown);
        let b = cfg.staircase.transmission_rate(&ep.params, ep.level);

        let start = ep.state;
        self.daily.clear();
        let mut s = start;
        for _ in 0..DAYS_PER_WEEK {
            s = match cfg.solver.integrate(&s, &ep.params, b, 1.0) {
                Ok(next) => next,
                Err(e) => {
                    self.episode = Some(ep);
                    return Err(e.into());
                }
            };
            self.daily.push(s);
        }

        let health_step = costs::health_cost_step(&start, &s, &ep.params)?;
        let eco_step = costs::economic_cost_step(&self.daily, &ep.params, lockdown, &cfg.params.econ);
        ep.state = s;
        ep.health_cum += health_step;
        ep.eco_cum += eco_step;
        let aggregated = costs::aggregate(health_step, eco_step, ep.goal.beta, &cfg.scales);
        let violations = costs::check_constraints(ep.health_cum, ep.eco_cum, &ep.goal.constraints);

        let record = WeekRecord {
            week: ep.week,
            action,
            s: s.s,
            e: s.e,
            i: s.i,
            r: s.r,
            a: s.a,
            h: s.h,
            b_level: ep.level.0,
            health_step,
            eco_step,
            health_cum: ep.health_cum,
            eco_cum: ep.eco_cum,
            aggregated,
        };
        ep.week += 1;
        let done = ep.week >= horizon;
        let costs = CostSnapshot {
            health_step,
            eco_step,
            health_cum: ep.health_cum,
            eco_cum: ep.eco_cum,
            aggregated,
        };
        let observation = self.observe(&ep);
        self.episode = Some(ep);
        Ok(StepResult {
            observation,
            costs,
            violations,
            done,
            timeout: done,
            record,
        })
    }

    /// Sampled model and onset delay of the current episode.
    pub fn sampled_model(&self) -> Option<(SeirahParams, f64)> {
        self.episode.as_ref().map(|e| (e.params, e.onset_delay))
    }

    pub fn state(&self) -> Option<SeirahState> {
        self.episode.as_ref().map(|e| e.state)
    }

    fn observe(&self, ep: &Episode) -> Observation {
        let n = ep.params.n;
        let goal = match self.config.mode {
            ObservationMode::Base => None,
            ObservationMode::Goal => Some(GoalFeatures {
                beta: ep.goal.beta.value(),
                constraint: None,
            }),
            ObservationMode::Constrained => Some(GoalFeatures {
                beta: ep.goal.beta.value(),
                constraint: Some(constraint_features(&ep.goal.constraints, ep.health_cum, ep.eco_cum)),
            }),
        };
        Observation {
            seirah_norm: ep.state.compartments().map(|c| c / n),
            prev_lockdown: ep.prev_lockdown,
            curr_lockdown: ep.curr_lockdown,
            health_cum_norm: ep.health_cum / n,
            eco_cum_norm: ep.eco_cum / ECO_OBS_SCALE,
            level_norm: f64::from(ep.level.0) / f64::from(self.config.staircase.max_level()),
            goal,
        }
    }
}

/// Bounds are divided by the top of their sampling range; an absent bound encodes as that top.
fn constraint_features(spec: &ConstraintSpec, health_cum: f64, eco_cum: f64) -> ConstraintFeatures {
    let death_norm = DEATH_BOUND_RANGE[1];
    let eco_norm = ECO_BOUND_RANGE[1];
    let death_bound = spec.max_deaths.unwrap_or(death_norm);
    let eco_bound = spec.max_eco.unwrap_or(eco_norm);
    ConstraintFeatures {
        death_bound: death_bound / death_norm,
        eco_bound: eco_bound / eco_norm,
        death_remaining: (death_bound - health_cum).max(0.0) / death_norm,
        eco_remaining: (eco_bound - eco_cum).max(0.0) / eco_norm,
    }
}

/// Maps observations to weekly decisions.
pub trait Policy: Sync {
    fn act(&self, obs: &Observation) -> Action;
}

/// Always takes the same action.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub Action);

impl Policy for ConstantPolicy {
    fn act(&self, _obs: &Observation) -> Action {
        self.0
    }
}

impl<F> Policy for F
where
    F: Fn(&Observation) -> Action + Sync,
{
    fn act(&self, obs: &Observation) -> Action {
        self(obs)
    }
}

/// Full record of one policy rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub goal: Goal,
    pub params: SeirahParams,
    pub onset_delay: f64,
    pub records: Vec<WeekRecord>,
    pub health_cum: f64,
    pub eco_cum: f64,
}

impl Trajectory {
    /// One JSON object per week, newline-terminated.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn lockdown_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let locked = self.records.iter().filter(|r| r.action.is_lockdown()).count();
        locked as f64 / self.records.len() as f64
    }
}

pub fn rollout<P: Policy + ?Sized>(
    policy: &P,
    config: &EnvConfig,
    goal: Goal,
    seed: u64,
) -> Result<Trajectory, EnvError> {
    let mut env = EpidemicEnv::new(*config);
    let mut obs = env.reset(seed, goal)?;
    let (params, onset_delay) = env.sampled_model().expect("episode started");
    let mut records = Vec::with_capacity(config.horizon_weeks);
    loop {
        let step = env.step(policy.act(&obs))?;
        records.push(step.record);
        obs = step.observation;
        if step.done {
            break;
        }
    }
    let last = records.last().copied();
    Ok(Trajectory {
        seed,
        goal,
        params,
        onset_delay,
        health_cum: last.map_or(0.0, |r| r.health_cum),
        eco_cum: last.map_or(0.0, |r| r.eco_cum),
        records,
    })
}

/// Deterministic per-episode seed derived from a base seed (splitmix64).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Aggregate statistics over evaluation episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n_episodes: usize,
    pub health_mean: f64,
    pub health_stderr: f64,
    pub eco_mean: f64,
    pub eco_stderr: f64,
    pub aggregated_mean: f64,
    pub lockdown_fraction: f64,
    /// Fraction of episodes ending above each bound.
    pub health_violation_rate: f64,
    pub eco_violation_rate: f64,
}

/// Mean and standard error (sample stdev / √n; 0 when n = 1).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `n_episodes` rollouts with seeds derived from `base_seed`.
///
/// Episodes run in parallel; statistics are reduced in episode order.
pub fn evaluate_policy<P: Policy + ?Sized>(
    policy: &P,
    config: &EnvConfig,
    goal: Goal,
    n_episodes: usize,
    base_seed: u64,
) -> Result<EvalSummary, EnvError> {
    if n_episodes == 0 {
        return Err(EnvError::NoEpisodes);
    }
    let trajectories = (0..n_episodes as u64)
        .into_par_iter()
        .map(|i| rollout(policy, config, goal, derive_seed(base_seed, i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(&trajectories))
}

pub fn summarize(trajectories: &[Trajectory]) -> EvalSummary {
    let health: Vec<f64> = trajectories.iter().map(|t| t.health_cum).collect();
    let eco: Vec<f64> = trajectories.iter().map(|t| t.eco_cum).collect();
    let (health_mean, health_stderr) = mean_stderr(&health);
    let (eco_mean, eco_stderr) = mean_stderr(&eco);
    let n = trajectories.len() as f64;
    let aggregated_mean = trajectories
        .iter()
        .map(|t| t.records.iter().map(|r| r.aggregated).sum::<f64>())
        .sum::<f64>()
        / n;
    let lockdown_fraction = trajectories.iter().map(Trajectory::lockdown_fraction).sum::<f64>() / n;
    let rate = |pred: &dyn Fn(&Trajectory) -> bool| {
        trajectories.iter().filter(|t| pred(t)).count() as f64 / n
    };
    EvalSummary {
        n_episodes: trajectories.len(),
        health_mean,
        health_stderr,
        eco_mean,
        eco_stderr,
        aggregated_mean,
        lockdown_fraction,
        health_violation_rate: rate(&|t| t.goal.constraints.max_deaths.is_some_and(|m| t.health_cum > m)),
        eco_violation_rate: rate(&|t| t.goal.constraints.max_eco.is_some_and(|m| t.eco_cum > m)),
    }
}

/// One transition as seen by a learner: features plus scaled step costs.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessStep {
    pub features: Vec<f64>,
    pub health: f64,
    pub eco: f64,
    pub violations: Violations,
    pub done: bool,
    pub timeout: bool,
}

/// Minimal episodic interface the value-based trainers run against.
pub trait DecisionProcess {
    fn observation_dim(&self) -> usize;
    fn begin(&mut self, seed: u64, goal: Goal) -> Result<Vec<f64>, EnvError>;
    fn advance(&mut self, action: Action) -> Result<ProcessStep, EnvError>;
}

impl DecisionProcess for EpidemicEnv {
    fn observation_dim(&self) -> usize {
        self.config.mode.dim()
    }

    fn begin(&mut self, seed: u64, goal: Goal) -> Result<Vec<f64>, EnvError> {
        Ok(self.reset(seed, goal)?.features())
    }

    fn advance(&mut self, action: Action) -> Result<ProcessStep, EnvError> {
        let step = self.step(action)?;
        let scales = self.config.scales;
        Ok(ProcessStep {
            features: step.observation.features(),
            health: scales.scale_health(step.costs.health_step),
            eco: scales.scale_eco(step.costs.eco_step),
            violations: step.violations,
            done: step.done,
            timeout: step.timeout,
        })
    }
}
