//! Running experiments end to end and comparing their fronts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::artifact::{Algorithm, LogLine, PolicyFile, RunArtifact, RunConfig, EVALUATIONS_FILE, FRONT_FILE};
use super::front::{area_under_front, build_front, FrontPoint, NormBounds, ParetoFront};
use super::stats::{mean, sample_variance, welch_t_test};
use super::ExperimentError;
use crate::costs::{ConstraintSpec, MixingWeight};
use crate::dqn::{train_dqn, train_goal_dqn, train_goal_dqn_c, LogRow, TrainedQ};
use crate::env::{derive_seed, evaluate_policy, Goal, ObservationMode};
use crate::nsga2::{evolve_epidemic, Individual};
use crate::policy::PolicyParams;

/// Base seed of the evaluation episodes behind every stored front point.
///
/// Shared by all runs so that fronts are compared on common episodes.
pub const EVAL_SEED: u64 = 0x0EA1_5EED;

/// Significance level of pairwise comparisons.
pub const ALPHA: f64 = 0.05;

/// `n` evenly spaced β values at the cell midpoints of [0, 1].
pub fn sweep_betas(n: usize) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
}

/// Mean costs of `policy` over `episodes` common-seed evaluation episodes.
pub fn evaluate_point(
    policy: &PolicyFile,
    config: &RunConfig,
    goal: Goal,
    episodes: usize,
    policy_ref: &str,
) -> Result<FrontPoint, ExperimentError> {
    let env = config.env(policy.observation_mode());
    let s = evaluate_policy(policy, &env, goal, episodes, EVAL_SEED)?;
    Ok(FrontPoint {
        policy_ref: policy_ref.to_string(),
        beta: policy.is_goal_conditioned().then_some(goal.beta.value()),
        health_mean: s.health_mean,
        eco_mean: s.eco_mean,
        health_stderr: s.health_stderr,
        eco_stderr: s.eco_stderr,
    })
}

/// Evaluates a goal-conditioned policy at `n_goals` β values (no constraints).
pub fn goal_sweep(
    policy: &PolicyFile,
    config: &RunConfig,
    n_goals: usize,
    episodes: usize,
    policy_ref: &str,
) -> Result<Vec<FrontPoint>, ExperimentError> {
    if !policy.is_goal_conditioned() {
        return Err(ExperimentError::Unsupported(format!("{policy_ref} is not goal-conditioned")));
    }
    sweep_betas(n_goals)
        .into_iter()
        .map(|b| {
            let goal = Goal::beta(b).expect("midpoints lie in (0, 1)");
            evaluate_point(policy, config, goal, episodes, policy_ref)
        })
        .collect()
}

fn log_lines<'a>(policy: &str, rows: &'a [LogRow]) -> impl Iterator<Item = LogLine> + 'a {
    let policy = policy.to_string();
    rows.iter().map(move |r| LogLine {
        policy: policy.clone(),
        step: r.step as u64,
        eval_health_mean: r.eval_health_mean,
        eval_eco_mean: r.eval_eco_mean,
        loss: Some(r.loss),
    })
}

fn trained_policy_file(trained: TrainedQ) -> PolicyFile {
    match trained {
        TrainedQ::Dqn(p) => PolicyFile::FixedBeta { beta: p.beta, q: p.q },
        TrainedQ::Goal(e) => PolicyFile::Goal(e),
    }
}

fn generation_points(generation: usize, pop: &[Individual]) -> Vec<FrontPoint> {
    pop.iter()
        .enumerate()
        .filter(|(_, ind)| ind.rank == 0)
        .map(|(i, ind)| FrontPoint {
            policy_ref: format!("gen{generation}/{i}"),
            beta: None,
            health_mean: ind.fitness.objectives[0],
            eco_mean: ind.fitness.objectives[1],
            health_stderr: ind.fitness.stderr[0],
            eco_stderr: ind.fitness.stderr[1],
        })
        .collect()
}

/// Policy name of the fixed-β learner trained at `beta`.
pub fn dqn_policy_name(beta: f64) -> String {
    format!("dqn_beta_{beta:.2}")
}

/// Trains `algorithm` and writes a complete run directory at `out`.
pub fn run_experiment(algorithm: Algorithm, config: RunConfig, seed: u64, out: &Path) -> Result<RunArtifact, ExperimentError> {
    config.validate()?;
    let run = RunArtifact::create(out, algorithm, seed, config)?;
    let cfg = &run.manifest.config;
    let mut log = Vec::new();
    let mut evaluated = Vec::new();
    match algorithm {
        Algorithm::Dqn => {
            let env = cfg.env(ObservationMode::Base);
            for (i, &b) in cfg.dqn_betas.iter().enumerate() {
                let beta = MixingWeight::new(b).expect("validated");
                let name = dqn_policy_name(b);
                log::info!("training {name}");
                let outcome = train_dqn(&env, beta, &cfg.train, derive_seed(seed, i as u64))?;
                log.extend(log_lines(&name, &outcome.log));
                let policy = trained_policy_file(outcome.policy);
                run.write_policy(&name, &policy)?;
                evaluated.push(evaluate_point(&policy, cfg, Goal { beta, constraints: ConstraintSpec::none() }, cfg.front_episodes, &name)?);
            }
        }
        Algorithm::GoalDqn | Algorithm::GoalDqnC => {
            let env = cfg.env(ObservationMode::Base);
            let outcome = if algorithm == Algorithm::GoalDqn {
                train_goal_dqn(&env, &cfg.train, seed)?
            } else {
                train_goal_dqn_c(&env, &cfg.train, seed)?
            };
            let name = algorithm.as_str();
            log.extend(log_lines(name, &outcome.log));
            let policy = trained_policy_file(outcome.policy);
            run.write_policy(name, &policy)?;
            evaluated = goal_sweep(&policy, cfg, cfg.sweep_goals, cfg.front_episodes, name)?;
        }
        Algorithm::Nsga2 => {
            let env = cfg.env(ObservationMode::Base);
            let per_generation = (cfg.nsga2.population_size * cfg.nsga2.n_eval * env.horizon_weeks) as u64;
            let (problem, evo) = evolve_epidemic(&env, &cfg.nsga2, seed, |generation, pop| {
                let points = generation_points(generation, pop);
                let n = points.len() as f64;
                log.push(LogLine {
                    policy: "nsga2".into(),
                    step: (generation as u64 + 1) * per_generation,
                    eval_health_mean: points.iter().map(|p| p.health_mean).sum::<f64>() / n,
                    eval_eco_mean: points.iter().map(|p| p.eco_mean).sum::<f64>() / n,
                    loss: None,
                });
                run.write_points(&format!("pareto_gen_{generation}.json"), &points)
                    .map_err(|e| crate::nsga2::EvolveError::Config(e.to_string()))
            })?;
            let mut front: Vec<&Individual> = evo.front();
            front.sort_by(|a, b| a.fitness.objectives[0].total_cmp(&b.fitness.objectives[0]));
            for (j, ind) in front.iter().enumerate() {
                let name = format!("nsga2_{j:02}");
                let q: PolicyParams = problem.policy(&ind.genome);
                let policy = PolicyFile::Evolved { q };
                run.write_policy(&name, &policy)?;
                evaluated.push(evaluate_point(&policy, cfg, Goal::beta(0.5).expect("unit"), cfg.front_episodes, &name)?);
            }
        }
    }
    run.write_log(&log)?;
    run.write_points(EVALUATIONS_FILE, &evaluated)?;
    run.write_points(FRONT_FILE, &build_front(evaluated).points)?;
    Ok(run)
}

/// Union front over several runs; policy refs become `<run_id>/<policy>`.
pub fn union_front(runs: &[RunArtifact]) -> Result<ParetoFront, ExperimentError> {
    let mut all = Vec::new();
    for run in runs {
        for mut p in run.front_points()? {
            p.policy_ref = format!("{}/{}", run.id(), p.policy_ref);
            all.push(p);
        }
    }
    Ok(build_front(all))
}

/// A comparison group: one run directory, or every run directly under a parent directory.
pub fn resolve_group(path: &Path) -> Result<(String, Vec<RunArtifact>), ExperimentError> {
    let label = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    if path.join(super::artifact::CONFIG_FILE).is_file() {
        return Ok((label, vec![RunArtifact::load(path)?]));
    }
    let runs = super::artifact::list_runs(path)?;
    if runs.is_empty() {
        return Err(ExperimentError::MissingArtifact(format!("no runs under {}", path.display())));
    }
    Ok((label, runs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub runs: Vec<String>,
    /// One area per run, under the shared bounds.
    pub areas: Vec<f64>,
    pub area_mean: f64,
    pub area_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub bounds: NormBounds,
    pub groups: Vec<GroupSummary>,
    /// Symmetric matrix of two-sided Welch p-values on the areas.
    pub p_values: Vec<Vec<f64>>,
    pub significant: Vec<Vec<bool>>,
    pub alpha: f64,
}

impl ComparisonReport {
    /// Plain-text table: one row per group, then the p-value matrix.
    pub fn to_table(&self) -> String {
        let width = self.groups.iter().map(|g| g.label.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{:<width$}  {:>4}  {:>8}  {:>8}\n", "group", "runs", "area", "std");
        for g in &self.groups {
            out += &format!("{:<width$}  {:>4}  {:>8.4}  {:>8.4}\n", g.label, g.runs.len(), g.area_mean, g.area_std);
        }
        out += &format!("\np-values (* significant at {})\n{:<width$}", self.alpha, "");
        for g in &self.groups {
            out += &format!("  {:>10}", g.label);
        }
        out.push('\n');
        for (i, g) in self.groups.iter().enumerate() {
            out += &format!("{:<width$}", g.label);
            for j in 0..self.groups.len() {
                let mark = if self.significant[i][j] { "*" } else { " " };
                out += &format!("  {:>9.4}{mark}", self.p_values[i][j]);
            }
            out.push('\n');
        }
        out
    }
}

/// Areas under each run's front, normalized by bounds over all runs' points.
pub fn compare_runs(groups: &[(String, Vec<RunArtifact>)]) -> Result<ComparisonReport, ExperimentError> {
    let mut fronts = Vec::new();
    for (_, runs) in groups {
        let mut per_group = Vec::new();
        for run in runs {
            let costs: Vec<[f64; 2]> = run.front_points()?.iter().map(FrontPoint::costs).collect();
            per_group.push(costs);
        }
        fronts.push(per_group);
    }
    let all: Vec<[f64; 2]> = fronts.iter().flatten().flatten().copied().collect();
    let bounds = NormBounds::from_points(all.iter())
        .ok_or_else(|| ExperimentError::MissingArtifact("no front points to compare".into()))?;

    let summaries: Vec<GroupSummary> = groups
        .iter()
        .zip(&fronts)
        .map(|((label, runs), per_group)| {
            let areas: Vec<f64> = per_group.iter().map(|f| area_under_front(f, &bounds)).collect();
            GroupSummary {
                label: label.clone(),
                runs: runs.iter().map(|r| r.id().to_string()).collect(),
                area_mean: mean(&areas),
                area_std: sample_variance(&areas).sqrt(),
                areas,
            }
        })
        .collect();

    let n = summaries.len();
    let mut p_values = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let p = welch_t_test(&summaries[i].areas, &summaries[j].areas)?.p;
            p_values[i][j] = p;
            p_values[j][i] = p;
        }
    }
    let significant = p_values.iter().map(|row| row.iter().map(|&p| p < ALPHA).collect()).collect();
    Ok(ComparisonReport {
        bounds,
        groups: summaries,
        p_values,
        significant,
        alpha: ALPHA,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Action, ConstantPolicy};
    use crate::policy::MlpSpec;

    #[test]
    fn sweep_grid() {
        assert_eq!(sweep_betas(1), vec![0.5]);
        assert_eq!(sweep_betas(4), vec![0.125, 0.375, 0.625, 0.875]);
    }

    /// A goal ensemble whose eco head always prefers lockdown, whatever β.
    fn constant_goal_policy() -> PolicyFile {
        let spec = MlpSpec::new(12, 2);
        let mut q = PolicyParams::zeros(spec);
        let n = q.flat().len();
        q.flat_mut()[n - 1] = 1.0; // output bias of action 1
        PolicyFile::Goal(crate::dqn::QEnsemble {
            q_health: q.clone(),
            q_eco: q,
            q_c_health: None,
            q_c_eco: None,
        })
    }

    #[test]
    fn sweep_of_constant_policy_is_flat() {
        let cfg = RunConfig::default();
        let pts = goal_sweep(&constant_goal_policy(), &cfg, 5, 4, "g").unwrap();
        assert_eq!(pts.len(), 5);
        for p in &pts {
            assert_eq!(p.health_mean, pts[0].health_mean);
            assert_eq!(p.eco_mean, pts[0].eco_mean);
        }
        let env = cfg.env(ObservationMode::Goal);
        let direct = evaluate_policy(&ConstantPolicy(Action::Lockdown), &env, Goal::beta(0.1).unwrap(), 4, EVAL_SEED).unwrap();
        assert_eq!(direct.health_mean, pts[0].health_mean);
        assert_eq!(goal_sweep(&constant_goal_policy(), &cfg, 1, 2, "g").unwrap()[0].beta, Some(0.5));
    }

    fn tiny_config() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.train.total_env_steps = 300;
        cfg.train.learning_starts = 64;
        cfg.train.eval_every = 150;
        cfg.train.eval_episodes = 2;
        cfg.train.hidden_dim = 8;
        cfg.dqn_betas = vec![0.0, 1.0];
        cfg.front_episodes = 3;
        cfg.sweep_goals = 3;
        cfg.nsga2.population_size = 4;
        cfg.nsga2.generations = 2;
        cfg.nsga2.n_eval = 2;
        cfg.nsga2.hidden_dim = 8;
        cfg
    }

    #[test]
    fn experiments_write_complete_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        for algo in Algorithm::ALL {
            let dir = tmp.path().join(algo.as_str());
            let run = run_experiment(algo, tiny_config(), 5, &dir).unwrap();
            let front = run.front_points().unwrap();
            assert!(!front.is_empty());
            assert!(!run.read_log().unwrap().is_empty());
            // Re-evaluating a stored policy reproduces its front point exactly.
            let p = &front[0];
            let policy = run.load_policy(&p.policy_ref).unwrap();
            let goal = Goal::beta(p.beta.unwrap_or(policy.default_beta())).unwrap();
            let again = evaluate_point(&policy, &run.manifest.config, goal, 3, &p.policy_ref).unwrap();
            assert_eq!(&again, p);
        }
        assert!(tmp.path().join("nsga2/pareto_gen_2.json").exists());
        assert_eq!(
            RunArtifact::load(&tmp.path().join("dqn")).unwrap().policy_names().unwrap(),
            vec!["dqn_beta_0.00", "dqn_beta_1.00"]
        );
    }

    #[test]
    fn same_seed_same_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let a = run_experiment(Algorithm::GoalDqnC, tiny_config(), 3, &tmp.path().join("a")).unwrap();
        let b = run_experiment(Algorithm::GoalDqnC, tiny_config(), 3, &tmp.path().join("b")).unwrap();
        for file in ["policies/goal_dqn_c.json", "log.csv", "pareto_final.json", "evaluations.json"] {
            assert_eq!(
                std::fs::read(a.dir.join(file)).unwrap(),
                std::fs::read(b.dir.join(file)).unwrap(),
                "{file}"
            );
        }
    }

    #[test]
    fn comparing_a_run_with_its_copy() {
        let tmp = tempfile::tempdir().unwrap();
        let run = run_experiment(Algorithm::Nsga2, tiny_config(), 1, &tmp.path().join("x")).unwrap();
        let copy = tmp.path().join("y");
        std::fs::create_dir_all(copy.join("policies")).unwrap();
        for f in ["config.json", "pareto_final.json"] {
            std::fs::copy(run.dir.join(f), copy.join(f)).unwrap();
        }
        let groups = vec![resolve_group(&run.dir).unwrap(), resolve_group(&copy).unwrap()];
        let report = compare_runs(&groups).unwrap();
        assert_eq!(report.p_values[0][1], 1.0);
        assert_eq!(report.groups[0].areas, report.groups[1].areas);
        assert!(report.to_table().contains("p-values"));
        let parent = resolve_group(tmp.path()).unwrap();
        assert_eq!(parent.1.len(), 2);
        let union = union_front(&parent.1).unwrap();
        assert!(union.points.iter().all(|p| p.policy_ref.starts_with("x/") || p.policy_ref.starts_with("y/")));
    }
}
