use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

use epiopt_core::dqn::QEnsemble;
use epiopt_core::evalkit::{run_experiment, Algorithm, FrontPoint, PolicyFile, RunArtifact, RunConfig};
use epiopt_core::nsga2::dominates;
use epiopt_core::params::ParameterSet;
use epiopt_core::policy::{MlpSpec, PolicyParams};
use epiopt_service::{router, AppState};

fn tiny_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.train.total_env_steps = 200;
    cfg.train.learning_starts = 64;
    cfg.train.eval_every = 0;
    cfg.train.eval_episodes = 2;
    cfg.train.hidden_dim = 8;
    cfg.dqn_betas = vec![0.0, 0.5];
    cfg.front_episodes = 2;
    cfg.sweep_goals = 3;
    cfg.nsga2.population_size = 6;
    cfg.nsga2.generations = 2;
    cfg.nsga2.n_eval = 2;
    cfg.nsga2.hidden_dim = 8;
    cfg
}

/// Goal ensemble that locks down whenever β < 0.5: the health head prefers
/// lockdown by 1, the eco head prefers opening by 1.
fn split_goal_policy() -> PolicyFile {
    let spec = MlpSpec::new(12, 2);
    let with_bias = |b0: f64, b1: f64| {
        let mut q = PolicyParams::zeros(spec);
        let n = q.flat().len();
        q.flat_mut()[n - 2] = b0;
        q.flat_mut()[n - 1] = b1;
        q
    };
    PolicyFile::Goal(QEnsemble {
        q_health: with_bias(0.0, 1.0),
        q_eco: with_bias(1.0, 0.0),
        q_c_health: None,
        q_c_eco: None,
    })
}

struct Fixture {
    _tmp: TempDir,
    root: PathBuf,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().join("runs");
        for (i, algo) in Algorithm::ALL.into_iter().enumerate() {
            run_experiment(algo, tiny_config(), i as u64, &root.join(algo.as_str())).unwrap();
        }
        let manual = RunArtifact::create(&root.join("manual"), Algorithm::GoalDqn, 0, RunConfig::default()).unwrap();
        manual.write_policy("split", &split_goal_policy()).unwrap();
        manual.write_points("pareto_final.json", &[]).unwrap();
        Fixture { _tmp: tmp, root }
    })
}

fn app() -> Router {
    router(Arc::new(AppState::load(&fixture().root, None).unwrap()))
}

async fn send(app: Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

async fn get(app: Router, uri: &str) -> (StatusCode, Vec<u8>) {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post_episode(app: Router, body: Value) -> (StatusCode, Vec<u8>) {
    let req = Request::post("/api/episodes")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    send(app, req).await
}

fn parse(body: &[u8]) -> Value {
    serde_json::from_slice(body).unwrap()
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/api").join(name);
    let text = std::fs::read_to_string(&path).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn assert_valid(schema_name: &str, value: &Value) {
    let v = schema(schema_name);
    let errors: Vec<String> = v.iter_errors(value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{schema_name}: {errors:?}");
}

#[tokio::test]
async fn health_and_meta() {
    let (status, body) = get(app(), "/api/health").await;
    assert_eq!((status, body.as_slice()), (StatusCode::OK, b"ok".as_slice()));

    let (status, a) = get(app(), "/api/meta").await;
    assert_eq!(status, StatusCode::OK);
    let (_, b) = get(app(), "/api/meta").await;
    assert_eq!(a, b);
    let meta = parse(&a);
    assert_eq!(meta["params_digest"], ParameterSet::default().digest());
    assert_valid("meta.schema.json", &meta);

    let mut custom = ParameterSet::default();
    custom.model.b0 = 2.0;
    let state = AppState::load(&fixture().root, Some(custom)).unwrap();
    let (_, c) = get(router(Arc::new(state)), "/api/meta").await;
    assert_eq!(parse(&c)["params_digest"], custom.digest());
}

#[tokio::test]
async fn empty_runs_dir_lists_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let state = AppState::load(tmp.path(), None).unwrap();
    let (status, body) = get(router(Arc::new(state)), "/api/runs").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(parse(&body), json!([]));
}

#[tokio::test]
async fn runs_and_fronts() {
    let (status, body) = get(app(), "/api/runs").await;
    assert_eq!(status, StatusCode::OK);
    let runs = parse(&body);
    assert_valid("runs.schema.json", &runs);
    let ids: Vec<&str> = runs.as_array().unwrap().iter().map(|r| r["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["dqn", "goal_dqn", "goal_dqn_c", "manual", "nsga2"]);

    let (status, body) = get(app(), "/api/runs/nsga2/pareto").await;
    assert_eq!(status, StatusCode::OK);
    let front = parse(&body);
    assert_valid("pareto_front.schema.json", &front);
    let stored: Vec<FrontPoint> =
        serde_json::from_str(&std::fs::read_to_string(fixture().root.join("nsga2/pareto_final.json")).unwrap()).unwrap();
    let served: Vec<FrontPoint> = serde_json::from_value(front["points"].clone()).unwrap();
    assert_eq!(served.len(), stored.len());
    for (s, d) in served.iter().zip(&stored) {
        assert_eq!(s.policy_ref, format!("nsga2/{}", d.policy_ref));
        assert_eq!(s.costs(), d.costs());
    }
    for a in &served {
        assert!(served.iter().all(|b| !dominates(&b.costs(), &a.costs())));
    }

    let (status, body) = get(app(), "/api/runs/nope/pareto").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_valid("error.schema.json", &parse(&body));
}

#[tokio::test]
async fn every_front_point_is_replayable() {
    for run in ["dqn", "goal_dqn", "goal_dqn_c", "nsga2"] {
        let (_, body) = get(app(), &format!("/api/runs/{run}/pareto")).await;
        for p in parse(&body)["points"].as_array().unwrap() {
            let mut req = json!({ "policy_ref": p["policy_ref"], "seed": 1 });
            if !p["beta"].is_null() {
                req["beta"] = p["beta"].clone();
            }
            let (status, _) = post_episode(app(), req).await;
            assert_eq!(status, StatusCode::OK, "{run}: {p}");
        }
    }
}

#[tokio::test]
async fn episode_contract() {
    let req = json!({ "policy_ref": "manual/split", "beta": 0.0, "seed": 42 });
    let (status, a) = post_episode(app(), req.clone()).await;
    assert_eq!(status, StatusCode::OK);
    let (_, b) = post_episode(app(), req).await;
    assert_eq!(a, b, "same request and seed must give identical bytes");

    let traj = parse(&a);
    assert_valid("trajectory_response.schema.json", &traj);
    assert_eq!(traj["seed"], 42);
    assert!(traj["lockdown_fraction"].as_f64().unwrap() >= 0.9);
    let records = traj["records"].as_array().unwrap();
    assert_eq!(records.len(), 52);
    let last = records.last().unwrap();
    assert_eq!(traj["health_cum"], last["health_cum"]);
    assert_eq!(traj["eco_cum"], last["eco_cum"]);
    // A year of lockdown costs about 150 billion euros.
    let eco = traj["eco_cum"].as_f64().unwrap();
    assert!((eco / 150e9 - 1.0).abs() < 0.1, "{eco}");
    for w in records.windows(2) {
        assert!(w[1]["health_cum"].as_f64() >= w[0]["health_cum"].as_f64());
        assert!(w[1]["eco_cum"].as_f64() >= w[0]["eco_cum"].as_f64());
    }

    let (_, open) = post_episode(app(), json!({ "policy_ref": "manual/split", "beta": 1.0, "seed": 42 })).await;
    assert_eq!(parse(&open)["lockdown_fraction"], 0.0);
}

#[tokio::test]
async fn episode_seed_is_echoed_when_random() {
    let (status, body) = post_episode(app(), json!({ "policy_ref": "goal_dqn/goal_dqn", "beta": 0.3 })).await;
    assert_eq!(status, StatusCode::OK);
    let first = parse(&body);
    let seed = first["seed"].as_u64().unwrap();
    let (_, again) = post_episode(app(), json!({ "policy_ref": "goal_dqn/goal_dqn", "beta": 0.3, "seed": seed })).await;
    assert_eq!(parse(&again), first);
}

#[tokio::test]
async fn constraints_are_reported() {
    let req = json!({ "policy_ref": "goal_dqn_c/goal_dqn_c", "beta": 1.0, "max_deaths": 1000.0, "seed": 3 });
    let (status, body) = post_episode(app(), req).await;
    assert_eq!(status, StatusCode::OK);
    let traj = parse(&body);
    assert_valid("trajectory_response.schema.json", &traj);
    assert_eq!(traj["constraints"]["max_deaths"], 1000.0);
    assert_eq!(
        traj["violations"]["health"].as_bool().unwrap(),
        traj["health_cum"].as_f64().unwrap() > 1000.0
    );
    assert_eq!(traj["policy_kind"], "goal_constrained");
}

#[tokio::test]
async fn episode_errors() {
    let cases = [
        (json!({ "policy_ref": "manual/split", "beta": 1.5 }), StatusCode::BAD_REQUEST),
        (json!({ "policy_ref": "manual/split", "beta": -0.1 }), StatusCode::BAD_REQUEST),
        (json!({ "policy_ref": "manual/split", "max_deaths": 10.0 }), StatusCode::BAD_REQUEST),
        (json!({ "policy_ref": "manual/split", "max_eco": 1e12 }), StatusCode::BAD_REQUEST),
        (json!({ "policy_ref": "manual/split", "beta": "high" }), StatusCode::BAD_REQUEST),
        (json!({ "beta": 0.5 }), StatusCode::BAD_REQUEST),
        (json!({ "policy_ref": "manual/missing" }), StatusCode::NOT_FOUND),
        (json!({ "policy_ref": "nope/split" }), StatusCode::NOT_FOUND),
        (json!({ "policy_ref": "noslash" }), StatusCode::NOT_FOUND),
        (json!({ "policy_ref": "dqn/dqn_beta_0.50", "beta": 0.5 }), StatusCode::UNPROCESSABLE_ENTITY),
        (json!({ "policy_ref": "nsga2/nsga2_00", "beta": 0.5 }), StatusCode::UNPROCESSABLE_ENTITY),
    ];
    for (body, expected) in cases {
        let (status, resp) = post_episode(app(), body.clone()).await;
        assert_eq!(status, expected, "{body}");
        assert_valid("error.schema.json", &parse(&resp));
    }
    let req = Request::post("/api/episodes").body(Body::from("{not json")).unwrap();
    assert_eq!(send(app(), req).await.0, StatusCode::BAD_REQUEST);

    // Fixed-β policies run without β.
    let (status, _) = post_episode(app(), json!({ "policy_ref": "dqn/dqn_beta_0.50", "seed": 1 })).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn request_schema_accepts_valid_requests() {
    let v = schema("episode_request.schema.json");
    assert!(v.is_valid(&json!({ "policy_ref": "r/p", "beta": 0.2, "max_deaths": 30500, "seed": 7 })));
    assert!(!v.is_valid(&json!({ "policy_ref": "r/p", "beta": 2 })));
    assert!(!v.is_valid(&json!({ "beta": 0.2 })));
}

#[tokio::test]
async fn cors_headers_present() {
    let req = Request::get("/api/health")
        .header(header::ORIGIN, "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "*");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_requests_are_independent() {
    let app = app();
    let mut handles = Vec::new();
    for i in 0..8u64 {
        let app = app.clone();
        handles.push(tokio::spawn(async move {
            let seed = i % 2;
            let (_, body) = post_episode(app, json!({ "policy_ref": "goal_dqn/goal_dqn", "beta": 0.5, "seed": seed })).await;
            (seed, body)
        }));
    }
    let mut by_seed: [Option<Vec<u8>>; 2] = [None, None];
    for h in handles {
        let (seed, body) = h.await.unwrap();
        match &by_seed[seed as usize] {
            Some(prev) => assert_eq!(prev, &body),
            None => by_seed[seed as usize] = Some(body),
        }
    }
    assert_ne!(by_seed[0], by_seed[1]);
}
