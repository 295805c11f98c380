use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"{
  "train": {"total_env_steps": 300, "learning_starts": 64, "eval_every": 150, "eval_episodes": 2, "hidden_dim": 8},
  "nsga2": {"population_size": 6, "generations": 2, "n_eval": 2, "hidden_dim": 8},
  "dqn_betas": [0.0, 1.0],
  "front_episodes": 2,
  "sweep_goals": 3
}"#;

fn epiopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epiopt"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = epiopt(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train(dir: &Path, algo: &str, seed: &str, out: &str) -> PathBuf {
    let cfg = dir.join("tiny.json");
    fs::write(&cfg, TINY).unwrap();
    let out = dir.join(out);
    ok(&["train", "--algo", algo, "--config", s(&cfg), "--seed", seed, "--out", s(&out)]);
    out
}

#[test]
fn train_is_bit_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    for algo in ["dqn", "goal-dqn", "goal-dqn-c", "nsga2"] {
        let a = train(tmp.path(), algo, "4", &format!("{algo}-a"));
        let b = train(tmp.path(), algo, "4", &format!("{algo}-b"));
        let names: Vec<_> = fs::read_dir(a.join("policies")).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert!(!names.is_empty());
        for name in names {
            let pa = fs::read(a.join("policies").join(&name)).unwrap();
            let pb = fs::read(b.join("policies").join(&name)).unwrap();
            assert_eq!(pa, pb, "{algo}: {name:?}");
        }
        for f in ["log.csv", "pareto_final.json"] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{algo}: {f}");
        }
    }
}

#[test]
fn simulate_is_bit_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let run = train(tmp.path(), "goal-dqn-c", "1", "run");
    let policy = run.join("policies/goal_dqn_c.json");
    let (a, b) = (tmp.path().join("a.jsonl"), tmp.path().join("b.jsonl"));
    for out in [&a, &b] {
        ok(&["simulate", "--policy", s(&policy), "--beta", "0.3", "--max-deaths", "20000", "--seed", "9", "--out", s(out)]);
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 52);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["week"], 0);

    ok(&["simulate", "--policy", s(&policy), "--beta", "0.3", "--seed", "10", "--out", s(&b)]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn sweep_pareto_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let goal = train(tmp.path(), "goal-dqn", "2", "goal");
    let nsga = train(tmp.path(), "nsga2", "2", "evo");

    let table = ok(&["sweep", "--run", s(&goal), "--n-goals", "4", "--episodes", "2"]);
    assert!(table.contains("0.125"));
    let swept: serde_json::Value = serde_json::from_str(&fs::read_to_string(goal.join("sweep_4.json")).unwrap()).unwrap();
    assert_eq!(swept.as_array().unwrap().len(), 4);
    assert!(!epiopt(&["sweep", "--run", s(&nsga)]).status.success());

    let front_file = tmp.path().join("front.json");
    ok(&["pareto", "--runs", s(&goal), s(&nsga), "--out", s(&front_file)]);
    let front: serde_json::Value = serde_json::from_str(&fs::read_to_string(&front_file).unwrap()).unwrap();
    assert!(!front["points"].as_array().unwrap().is_empty());

    let report_file = tmp.path().join("report.json");
    let table = ok(&["compare", "--runs", s(&goal), s(&goal), "--out", s(&report_file)]);
    assert!(table.contains("p-values"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report_file).unwrap()).unwrap();
    assert_eq!(report["p_values"][0][1], 1.0);
}

#[test]
fn rejects_bad_input() {
    let tmp = tempfile::tempdir().unwrap();
    let out = epiopt(&["train", "--algo", "ppo", "--out", s(&tmp.path().join("x"))]);
    assert!(!out.status.success());
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{\"dqn_betas\": [2.0]}").unwrap();
    let out = epiopt(&["train", "--algo", "dqn", "--config", s(&bad), "--out", s(&tmp.path().join("y"))]);
    assert!(!out.status.success());
    assert!(!epiopt(&["compare", "--runs", s(tmp.path())]).status.success());
}
