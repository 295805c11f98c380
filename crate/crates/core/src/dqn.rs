//! Value-based learners: fixed-β DQN, goal-conditioned DQN with one Q-network
//! per cost, and the constrained variant with violation-counting heads.
//!
//! Rewards are negative scaled costs, so cost heads are maximized. Constraint
//! heads are the exception: they estimate the expected number of future
//! violating weeks (a positive count) and are only used to filter actions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costs::{ConstraintSpec, MixingWeight, DEATH_BOUND_RANGE, ECO_BOUND_RANGE};
use crate::env::{
    derive_seed, evaluate_policy, Action, DecisionProcess, EnvConfig, EnvError, EpidemicEnv,
    EvalSummary, Goal, Observation, ObservationMode, Policy,
};
use crate::policy::{act_greedy, MlpSpec, PolicyParams};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("invalid training config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub total_env_steps: usize,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Discount of the cost heads.
    pub gamma: f64,
    /// Discount of the constraint heads; must be 1.
    pub constraint_gamma: f64,
    /// Gradient steps between target-network syncs.
    pub target_update_period: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of `total_env_steps` over which ε decays linearly.
    pub epsilon_decay_fraction: f64,
    /// Transitions collected before the first gradient step.
    pub learning_starts: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub hidden_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_env_steps: 1_000_000,
            replay_capacity: 50_000,
            batch_size: 64,
            learning_rate: 1e-3,
            gamma: 0.99,
            constraint_gamma: 1.0,
            target_update_period: 500,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.2,
            learning_starts: 1_000,
            eval_every: 20_000,
            eval_episodes: 30,
            hidden_dim: crate::policy::DEFAULT_HIDDEN,
        }
    }
}

impl TrainConfig {
    /// Default settings with a 2e5-step budget.
    pub fn desk() -> Self {
        TrainConfig {
            total_env_steps: 200_000,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.constraint_gamma != 1.0 {
            return bad("constraint heads require gamma = 1");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1]");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("replay capacity must hold at least one batch");
        }
        if self.target_update_period == 0 || self.eval_episodes == 0 || self.hidden_dim == 0 {
            return bad("target_update_period, eval_episodes and hidden_dim must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }

    pub fn epsilon(&self, step: usize) -> f64 {
        let decay = (self.epsilon_decay_fraction * self.total_env_steps as f64).max(1.0);
        let frac = (step as f64 / decay).min(1.0);
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }
}

/// Adam optimizer state for one parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(len: usize, lr: f64) -> Self {
        Adam {
            lr,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// An online network, its periodically frozen target copy and optimizer state.
#[derive(Debug, Clone)]
pub struct QHead {
    pub online: PolicyParams,
    pub target: PolicyParams,
    adam: Adam,
    grad: Vec<f64>,
    hidden: Vec<f64>,
    out: Vec<f64>,
}

impl QHead {
    pub fn new(online: PolicyParams, learning_rate: f64) -> Self {
        let spec = online.spec();
        QHead {
            target: online.clone(),
            adam: Adam::new(spec.param_count(), learning_rate),
            grad: vec![0.0; spec.param_count()],
            hidden: vec![0.0; spec.hidden_dim],
            out: vec![0.0; spec.output_dim],
            online,
        }
    }

    pub fn sync_target(&mut self) {
        self.target.flat_mut().copy_from_slice(self.online.flat());
    }

    fn target_values(&mut self, input: &[f64]) -> [f64; 2] {
        self.target.forward_into(input, &mut self.hidden, &mut self.out);
        [self.out[0], self.out[1]]
    }

    fn online_values(&mut self, input: &[f64]) -> [f64; 2] {
        self.online.forward_into(input, &mut self.hidden, &mut self.out);
        [self.out[0], self.out[1]]
    }

    /// One Adam step on the mean squared error between `Q(s, a)` and the targets.
    ///
    /// Returns the loss measured before the step.
    pub fn fit(&mut self, samples: &[(&[f64], Action, f64)]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let scale = 2.0 / samples.len() as f64;
        let mut loss = 0.0;
        let mut grad_out = [0.0; 2];
        for &(input, action, target) in samples {
            self.online.forward_into(input, &mut self.hidden, &mut self.out);
            let err = self.out[action.index()] - target;
            loss += err * err;
            grad_out[0] = 0.0;
            grad_out[1] = 0.0;
            grad_out[action.index()] = scale * err;
            self.online
                .accumulate_gradient(input, &self.hidden, &grad_out, &mut self.grad);
        }
        self.adam.step(self.online.flat_mut(), &self.grad);
        loss / samples.len() as f64
    }
}

/// `r + γ·next`.
pub fn td_target(reward: f64, gamma: f64, next_value: f64) -> f64 {
    reward + gamma * next_value
}

/// Tabular Q-learning step: `q + lr·(r + γ·max_a′ Q(s′,a′) − q)`.
pub fn tabular_td_update(q: f64, reward: f64, gamma: f64, next_max: f64, lr: f64) -> f64 {
    q + lr * (td_target(reward, gamma, next_max) - q)
}

/// One sample for [`td_update`].
#[derive(Debug, Clone, Copy)]
pub struct TdSample<'a> {
    pub obs: &'a [f64],
    pub action: Action,
    pub reward: f64,
    pub next_obs: &'a [f64],
}

/// DQN update: bootstrapped target `r + γ·max_a′ Q_target(s′, a′)` for every
/// sample (there is no terminal masking), then one gradient step on the online
/// network. Returns the pre-step loss.
pub fn td_update(head: &mut QHead, batch: &[TdSample<'_>], gamma: f64) -> f64 {
    let targets: Vec<f64> = batch
        .iter()
        .map(|s| {
            let next = head.target_values(s.next_obs);
            td_target(s.reward, gamma, next[0].max(next[1]))
        })
        .collect();
    let samples: Vec<(&[f64], Action, f64)> = batch
        .iter()
        .zip(&targets)
        .map(|(s, &t)| (s.obs, s.action, t))
        .collect();
    head.fit(&samples)
}

/// `argmax_a (1 − β)·Q_h(s,a) + β·Q_eco(s,a)`; ties go to no-lockdown.
pub fn select_action_goal(q_health: &[f64], q_eco: &[f64], beta: f64) -> Action {
    let mixed = |a: usize| (1.0 - beta) * q_health[a] + beta * q_eco[a];
    act_greedy(&[mixed(0), mixed(1)])
}

/// Goal selection restricted to actions whose constraint values are both below 1.
///
/// When every action is expected to violate, picks the smallest summed
/// violation estimate (ties to no-lockdown).
pub fn select_action_constrained(
    q_health: &[f64],
    q_eco: &[f64],
    q_c_health: &[f64],
    q_c_eco: &[f64],
    beta: f64,
) -> Action {
    let admissible = |a: usize| q_c_health[a] < 1.0 && q_c_eco[a] < 1.0;
    match (admissible(0), admissible(1)) {
        (true, true) => select_action_goal(q_health, q_eco, beta),
        (true, false) => Action::NoLockdown,
        (false, true) => Action::Lockdown,
        (false, false) => {
            let v0 = q_c_health[0] + q_c_eco[0];
            let v1 = q_c_health[1] + q_c_eco[1];
            if v1 < v0 {
                Action::Lockdown
            } else {
                Action::NoLockdown
            }
        }
    }
}

/// A single mixed-cost Q-network trained for one β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedBetaPolicy {
    pub beta: f64,
    pub q: PolicyParams,
}

impl Policy for FixedBetaPolicy {
    fn act(&self, obs: &Observation) -> Action {
        self.q.act(obs)
    }
}

/// Deterministic argmax over the network's two outputs.
impl Policy for PolicyParams {
    fn act(&self, obs: &Observation) -> Action {
        let q = self.forward(&obs.features()).expect("observation matches network input");
        act_greedy(&q)
    }
}

/// Per-cost Q-networks, plus constraint heads in the constrained variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QEnsemble {
    pub q_health: PolicyParams,
    pub q_eco: PolicyParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_c_health: Option<PolicyParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_c_eco: Option<PolicyParams>,
}

impl QEnsemble {
    pub fn is_constrained(&self) -> bool {
        self.q_c_health.is_some() && self.q_c_eco.is_some()
    }

    pub fn input_dim(&self) -> usize {
        self.q_health.spec().input_dim
    }

    pub fn select(&self, features: &[f64], beta: f64) -> Action {
        let eval = |p: &PolicyParams| p.forward(features).expect("observation matches network input");
        let qh = eval(&self.q_health);
        let qe = eval(&self.q_eco);
        match (&self.q_c_health, &self.q_c_eco) {
            (Some(ch), Some(ce)) => select_action_constrained(&qh, &qe, &eval(ch), &eval(ce), beta),
            _ => select_action_goal(&qh, &qe, beta),
        }
    }
}

impl Policy for QEnsemble {
    fn act(&self, obs: &Observation) -> Action {
        self.select(&obs.features(), obs.beta().unwrap_or(0.5))
    }
}

/// Which learner to run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    Dqn { beta: MixingWeight },
    Goal,
    GoalConstrained,
}

impl Variant {
    fn head_count(self) -> usize {
        match self {
            Variant::Dqn { .. } => 1,
            Variant::Goal => 2,
            Variant::GoalConstrained => 4,
        }
    }

    pub fn observation_mode(self) -> ObservationMode {
        match self {
            Variant::Dqn { .. } => ObservationMode::Base,
            Variant::Goal => ObservationMode::Goal,
            Variant::GoalConstrained => ObservationMode::Constrained,
        }
    }

    /// Goal for a new training episode.
    ///
    /// Goal variants draw β uniformly; the constrained one adds, half of the
    /// time, one uniformly chosen bound drawn from its range.
    pub fn sample_goal<R: Rng + ?Sized>(self, rng: &mut R) -> Goal {
        match self {
            Variant::Dqn { beta } => Goal {
                beta,
                constraints: ConstraintSpec::none(),
            },
            Variant::Goal => Goal::beta(rng.random::<f64>()).expect("unit interval"),
            Variant::GoalConstrained => {
                let goal = Goal::beta(rng.random::<f64>()).expect("unit interval");
                if rng.random::<f64>() >= 0.5 {
                    return goal;
                }
                let uniform = |rng: &mut R, [lo, hi]: [f64; 2]| lo + (hi - lo) * rng.random::<f64>();
                let constraints = if rng.random::<bool>() {
                    ConstraintSpec {
                        max_deaths: Some(uniform(rng, DEATH_BOUND_RANGE)),
                        max_eco: None,
                    }
                } else {
                    ConstraintSpec {
                        max_deaths: None,
                        max_eco: Some(uniform(rng, ECO_BOUND_RANGE)),
                    }
                };
                goal.with_constraints(constraints)
            }
        }
    }
}

/// Stored experience. Features never contain the week index.
#[derive(Debug, Clone)]
struct Transition {
    obs: Vec<f64>,
    action: Action,
    health: f64,
    eco: f64,
    violations: [f64; 2],
    next_obs: Vec<f64>,
    timeout: bool,
    beta: f64,
}

struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayBuffer {
    fn new(capacity: usize) -> Self {
        ReplayBuffer {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            next: 0,
        }
    }

    fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    fn len(&self) -> usize {
        self.items.len()
    }
}

/// One row of `log.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub eval_health_mean: f64,
    pub eval_eco_mean: f64,
    pub loss: f64,
    /// Selection score (lower is better).
    pub score: f64,
}

/// Result of an evaluation callback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalScore {
    pub score: f64,
    pub health_mean: f64,
    pub eco_mean: f64,
}

/// Trained networks in the shape of the variant that produced them.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedQ {
    Dqn(FixedBetaPolicy),
    Goal(QEnsemble),
}

impl Policy for TrainedQ {
    fn act(&self, obs: &Observation) -> Action {
        match self {
            TrainedQ::Dqn(p) => p.act(obs),
            TrainedQ::Goal(e) => e.act(obs),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights with the best evaluation score (final weights when never evaluated).
    pub policy: TrainedQ,
    pub log: Vec<LogRow>,
    pub best_step: usize,
}

struct Learner {
    variant: Variant,
    cfg: TrainConfig,
    heads: Vec<QHead>,
    gradient_steps: usize,
}

impl Learner {
    fn new<R: Rng + ?Sized>(variant: Variant, cfg: TrainConfig, input_dim: usize, rng: &mut R) -> Self {
        let spec = MlpSpec {
            input_dim,
            hidden_dim: cfg.hidden_dim,
            output_dim: 2,
        };
        let heads = (0..variant.head_count())
            .map(|_| QHead::new(PolicyParams::init_uniform(spec, rng), cfg.learning_rate))
            .collect();
        Learner {
            variant,
            cfg,
            heads,
            gradient_steps: 0,
        }
    }

    fn choose(&self, values: &[[f64; 2]], beta: f64) -> Action {
        match self.variant {
            Variant::Dqn { .. } => act_greedy(&values[0]),
            Variant::Goal => select_action_goal(&values[0], &values[1], beta),
            Variant::GoalConstrained => {
                select_action_constrained(&values[0], &values[1], &values[2], &values[3], beta)
            }
        }
    }

    fn greedy(&mut self, features: &[f64], beta: f64) -> Action {
        let values: Vec<[f64; 2]> = self.heads.iter_mut().map(|h| h.online_values(features)).collect();
        self.choose(&values, beta)
    }

    fn update(&mut self, buffer: &ReplayBuffer, rng: &mut ChaCha8Rng) -> f64 {
        let batch: Vec<&Transition> = (0..self.cfg.batch_size)
            .map(|_| &buffer.items[rng.random_range(0..buffer.len())])
            .collect();
        let n_heads = self.heads.len();
        let mut targets = vec![Vec::with_capacity(batch.len()); n_heads];
        let mut next_values = vec![[0.0; 2]; n_heads];
        for t in &batch {
            for (h, head) in self.heads.iter_mut().enumerate() {
                next_values[h] = head.target_values(&t.next_obs);
            }
            let next_action = self.choose(&next_values, t.beta).index();
            match self.variant {
                Variant::Dqn { beta } => {
                    let reward = -beta.mix(t.health, t.eco);
                    let next = next_values[0][0].max(next_values[0][1]);
                    targets[0].push(td_target(reward, self.cfg.gamma, next));
                }
                Variant::Goal | Variant::GoalConstrained => {
                    targets[0].push(td_target(-t.health, self.cfg.gamma, next_values[0][next_action]));
                    targets[1].push(td_target(-t.eco, self.cfg.gamma, next_values[1][next_action]));
                    if n_heads == 4 {
                        // A violated bound stays violated, so a γ = 1 count has no fixed
                        // point across the horizon; constraint heads stop at the timeout.
                        let carry = if t.timeout { 0.0 } else { 1.0 };
                        for c in 0..2 {
                            let next = carry * next_values[2 + c][next_action];
                            targets[2 + c].push(td_target(t.violations[c], self.cfg.constraint_gamma, next));
                        }
                    }
                }
            }
        }
        let mut loss = 0.0;
        for (head, head_targets) in self.heads.iter_mut().zip(&targets) {
            let samples: Vec<(&[f64], Action, f64)> = batch
                .iter()
                .zip(head_targets)
                .map(|(t, &y)| (t.obs.as_slice(), t.action, y))
                .collect();
            loss += head.fit(&samples);
        }
        self.gradient_steps += 1;
        if self.gradient_steps % self.cfg.target_update_period == 0 {
            self.heads.iter_mut().for_each(QHead::sync_target);
        }
        loss / n_heads as f64
    }

    fn snapshot(&self) -> TrainedQ {
        let online = |i: usize| self.heads[i].online.clone();
        match self.variant {
            Variant::Dqn { beta } => TrainedQ::Dqn(FixedBetaPolicy {
                beta: beta.value(),
                q: online(0),
            }),
            Variant::Goal => TrainedQ::Goal(QEnsemble {
                q_health: online(0),
                q_eco: online(1),
                q_c_health: None,
                q_c_eco: None,
            }),
            Variant::GoalConstrained => TrainedQ::Goal(QEnsemble {
                q_health: online(0),
                q_eco: online(1),
                q_c_health: Some(online(2)),
                q_c_eco: Some(online(3)),
            }),
        }
    }
}

/// Generic ε-greedy training loop with experience replay and target networks.
///
/// `evaluate` is called every `eval_every` environment steps and at the end;
/// the snapshot with the lowest score is returned.
pub fn train<D, F>(
    process: &mut D,
    variant: Variant,
    cfg: &TrainConfig,
    seed: u64,
    mut evaluate: F,
) -> Result<TrainOutcome, TrainError>
where
    D: DecisionProcess,
    F: FnMut(&TrainedQ) -> Result<Option<EvalScore>, TrainError>,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut learner = Learner::new(variant, *cfg, process.observation_dim(), &mut rng);
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);

    let mut episode = 0u64;
    let mut goal = variant.sample_goal(&mut rng);
    let mut obs = process.begin(derive_seed(seed, episode), goal)?;
    let mut log = Vec::new();
    let mut best: Option<(f64, TrainedQ, usize)> = None;
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;

    for step in 1..=cfg.total_env_steps {
        let beta = goal.beta.value();
        let action = if rng.random::<f64>() < cfg.epsilon(step - 1) {
            Action::from_index(rng.random_range(0..2))
        } else {
            learner.greedy(&obs, beta)
        };
        let out = process.advance(action)?;
        buffer.push(Transition {
            obs: std::mem::take(&mut obs),
            action,
            health: out.health,
            eco: out.eco,
            violations: out.violations.as_costs(),
            next_obs: out.features.clone(),
            timeout: out.timeout,
            beta,
        });
        obs = out.features;
        if out.done {
            episode += 1;
            goal = variant.sample_goal(&mut rng);
            obs = process.begin(derive_seed(seed, episode), goal)?;
        }

        if buffer.len() >= cfg.learning_starts.max(cfg.batch_size) {
            loss_sum += learner.update(&buffer, &mut rng);
            loss_count += 1;
        }

        let at_eval = cfg.eval_every > 0 && step % cfg.eval_every == 0;
        if at_eval || step == cfg.total_env_steps {
            let candidate = learner.snapshot();
            if let Some(score) = evaluate(&candidate)? {
                log.push(LogRow {
                    step,
                    eval_health_mean: score.health_mean,
                    eval_eco_mean: score.eco_mean,
                    loss: if loss_count > 0 { loss_sum / loss_count as f64 } else { 0.0 },
                    score: score.score,
                });
                loss_sum = 0.0;
                loss_count = 0;
                log::debug!("step {step}: score {:.4}", score.score);
                if best.as_ref().is_none_or(|(s, _, _)| score.score < *s) {
                    best = Some((score.score, candidate, step));
                }
            }
        }
    }

    let (policy, best_step) = match best {
        Some((_, p, s)) => (p, s),
        None => (learner.snapshot(), cfg.total_env_steps),
    };
    Ok(TrainOutcome {
        policy,
        log,
        best_step,
    })
}

/// β values used to score goal-conditioned snapshots.
pub const SELECTION_BETAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Evaluation goals used to score snapshots of a variant.
///
/// Constrained snapshots are additionally scored with the midpoint of each
/// bound's sampling range.
pub fn selection_goals(variant: Variant) -> Vec<Goal> {
    let plain = |b: f64| Goal::beta(b).expect("unit interval");
    match variant {
        Variant::Dqn { beta } => vec![Goal {
            beta,
            constraints: ConstraintSpec::none(),
        }],
        Variant::Goal => SELECTION_BETAS.iter().map(|&b| plain(b)).collect(),
        Variant::GoalConstrained => {
            let mid = |[lo, hi]: [f64; 2]| 0.5 * (lo + hi);
            let mut goals: Vec<Goal> = SELECTION_BETAS.iter().map(|&b| plain(b)).collect();
            for &b in &SELECTION_BETAS {
                goals.push(plain(b).with_constraints(ConstraintSpec {
                    max_deaths: Some(mid(DEATH_BOUND_RANGE)),
                    max_eco: None,
                }));
                goals.push(plain(b).with_constraints(ConstraintSpec {
                    max_deaths: None,
                    max_eco: Some(mid(ECO_BOUND_RANGE)),
                }));
            }
            goals
        }
    }
}

/// Mean aggregated cost over the selection goals plus the mean violation rate.
pub fn evaluate_snapshot(
    policy: &TrainedQ,
    env: &EnvConfig,
    variant: Variant,
    episodes: usize,
    eval_seed: u64,
) -> Result<EvalScore, TrainError> {
    let goals = selection_goals(variant);
    let mut score = 0.0;
    let mut health = 0.0;
    let mut eco = 0.0;
    for goal in &goals {
        let s: EvalSummary = evaluate_policy(policy, env, *goal, episodes, eval_seed)?;
        score += s.aggregated_mean + s.health_violation_rate + s.eco_violation_rate;
        health += s.health_mean;
        eco += s.eco_mean;
    }
    let n = goals.len() as f64;
    Ok(EvalScore {
        score: score / n,
        health_mean: health / n,
        eco_mean: eco / n,
    })
}

/// Trains `variant` on the epidemic environment with best-snapshot selection.
pub fn train_epidemic(
    env: &EnvConfig,
    variant: Variant,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, TrainError> {
    let env_cfg = env.with_mode(variant.observation_mode());
    let mut process = EpidemicEnv::new(env_cfg);
    // Selection episodes use seeds disjoint from the training stream.
    let eval_seed = derive_seed(seed ^ 0x5EED_E7A1, 0);
    train(&mut process, variant, cfg, seed, |candidate| {
        evaluate_snapshot(candidate, &env_cfg, variant, cfg.eval_episodes, eval_seed).map(Some)
    })
}

pub fn train_dqn(env: &EnvConfig, beta: MixingWeight, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome, TrainError> {
    train_epidemic(env, Variant::Dqn { beta }, cfg, seed)
}

pub fn train_goal_dqn(env: &EnvConfig, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome, TrainError> {
    train_epidemic(env, Variant::Goal, cfg, seed)
}

pub fn train_goal_dqn_c(env: &EnvConfig, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome, TrainError> {
    train_epidemic(env, Variant::GoalConstrained, cfg, seed)
}
