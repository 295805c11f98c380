use epiopt_core::env::{evaluate_policy, Action, ConstantPolicy, EnvConfig, Goal, ObservationMode};
use epiopt_core::evalkit::{area_under_front, run_experiment, union_front, Algorithm, NormBounds, RunArtifact, RunConfig};
use proptest::prelude::*;

fn tiny() -> RunConfig {
    serde_json::from_str(
        r#"{
            "train": {"total_env_steps": 400, "learning_starts": 64, "eval_every": 200, "eval_episodes": 2, "hidden_dim": 8},
            "dqn_betas": [0.0, 1.0],
            "front_episodes": 3,
            "sweep_goals": 4,
            "nsga2": {"population_size": 4, "generations": 1, "n_eval": 2, "hidden_dim": 8}
        }"#,
    )
    .unwrap()
}

#[test]
fn partial_config_keeps_defaults() {
    let cfg = tiny();
    assert_eq!(cfg.train.gamma, 0.99);
    assert_eq!(cfg.train.target_update_period, 500);
    assert_eq!(cfg.nsga2.crossover_rate, 0.5);
    assert_eq!(cfg.params, RunConfig::default().params);
}

#[test]
fn constant_policies_bracket_the_trade_off() {
    let env = EnvConfig::standard(Default::default(), ObservationMode::Base);
    let goal = Goal::beta(0.5).unwrap();
    let locked = evaluate_policy(&ConstantPolicy(Action::Lockdown), &env, goal, 10, 3).unwrap();
    let open = evaluate_policy(&ConstantPolicy(Action::NoLockdown), &env, goal, 10, 3).unwrap();
    assert!(locked.health_mean < open.health_mean);
    assert!(locked.eco_mean > open.eco_mean);
    assert_eq!(locked.lockdown_fraction, 1.0);
    assert_eq!(open.lockdown_fraction, 0.0);
}

#[test]
fn runs_reload_and_merge_into_one_front() {
    let tmp = tempfile::tempdir().unwrap();
    for algo in [Algorithm::Dqn, Algorithm::GoalDqn] {
        run_experiment(algo, tiny(), 2, &tmp.path().join(algo.as_str())).unwrap();
    }
    let runs: Vec<RunArtifact> = ["dqn", "goal_dqn"]
        .iter()
        .map(|d| RunArtifact::load(&tmp.path().join(d)).unwrap())
        .collect();
    let front = union_front(&runs).unwrap();
    assert!(!front.points.is_empty());
    assert!(front.points.iter().all(|p| p.policy_ref.contains('/')));
    for w in front.points.windows(2) {
        assert!(w[0].health_mean <= w[1].health_mean && w[0].eco_mean >= w[1].eco_mean);
    }
    let area = area_under_front(&front.normalized_points, &NormBounds { health: [0.0, 1.0], eco: [0.0, 1.0] });
    assert!((0.0..=1.0).contains(&area));
}

proptest! {
    #[test]
    fn adding_a_point_never_raises_the_area(
        pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..20),
        extra in (0.0f64..1.0, 0.0f64..1.0),
    ) {
        let unit = NormBounds { health: [0.0, 1.0], eco: [0.0, 1.0] };
        let base: Vec<[f64; 2]> = pts.iter().map(|&(a, b)| [a, b]).collect();
        let mut more = base.clone();
        more.push([extra.0, extra.1]);
        prop_assert!(area_under_front(&more, &unit) <= area_under_front(&base, &unit) + 1e-12);
    }
}
