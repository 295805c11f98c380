//! Read-only HTTP API over run directories: list runs and fronts, and roll out
//! stored policies on demand with caller-chosen β, constraints and seed.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::cors::{Any, CorsLayer};

use epiopt_core::costs::{ConstraintSpec, MixingWeight, DEATH_BOUND_RANGE, ECO_BOUND_RANGE};
use epiopt_core::env::{rollout, Goal, WeekRecord};
use epiopt_core::evalkit::{build_front, list_runs, Algorithm, ExperimentError, ParetoFront, PolicyFile, RunConfig};
use epiopt_core::params::{json_digest, ParameterSet};
use epiopt_core::seirah::SeirahParams;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        (status, Json(ErrorBody { error: self.to_string() })).into_response()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicySummary {
    pub name: String,
    pub kind: String,
    /// `<run_id>/<name>`, as accepted by the episode endpoint.
    pub policy_ref: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub id: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub params_digest: String,
    pub front_size: usize,
    pub policies: Vec<PolicySummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Meta {
    pub name: String,
    pub version: String,
    pub params_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRequest {
    pub policy_ref: String,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub max_deaths: Option<f64>,
    #[serde(default)]
    pub max_eco: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSample {
    pub params: SeirahParams,
    pub params_digest: String,
    pub onset_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationFlags {
    pub health: bool,
    pub eco: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResponse {
    pub policy_ref: String,
    pub policy_kind: String,
    pub seed: u64,
    pub beta: f64,
    pub constraints: ConstraintSpec,
    pub records: Vec<WeekRecord>,
    pub health_cum: f64,
    pub eco_cum: f64,
    pub lockdown_fraction: f64,
    pub violations: ViolationFlags,
    pub model: ModelSample,
}

struct LoadedRun {
    summary: RunSummary,
    config: RunConfig,
    front: ParetoFront,
    policies: BTreeMap<String, PolicyFile>,
}

/// Artifacts loaded once at startup and shared read-only between requests.
pub struct AppState {
    runs: BTreeMap<String, LoadedRun>,
    params_override: Option<ParameterSet>,
    meta: Meta,
}

impl AppState {
    /// Loads every run directory under `root`. `params` replaces the runs'
    /// own model parameters for on-demand episodes.
    pub fn load(root: &Path, params: Option<ParameterSet>) -> Result<Self, ExperimentError> {
        let mut runs = BTreeMap::new();
        for run in list_runs(root)? {
            let mut policies = BTreeMap::new();
            let mut summaries = Vec::new();
            for name in run.policy_names()? {
                let policy = run.load_policy(&name)?;
                summaries.push(PolicySummary {
                    policy_ref: format!("{}/{}", run.id(), name),
                    kind: policy.kind().to_string(),
                    name: name.clone(),
                });
                policies.insert(name, policy);
            }
            // Front points are re-validated; dominated entries are dropped.
            let mut front = build_front(run.front_points().unwrap_or_default());
            for p in &mut front.points {
                p.policy_ref = format!("{}/{}", run.id(), p.policy_ref);
            }
            let summary = RunSummary {
                id: run.id().to_string(),
                algorithm: run.algorithm(),
                seed: run.manifest.seed,
                params_digest: run.manifest.params_digest.clone(),
                front_size: front.points.len(),
                policies: summaries,
            };
            runs.insert(
                summary.id.clone(),
                LoadedRun {
                    summary,
                    config: run.manifest.config.clone(),
                    front,
                    policies,
                },
            );
        }
        let digest = params.unwrap_or_default().digest();
        Ok(AppState {
            runs,
            params_override: params,
            meta: Meta {
                name: "epiopt".into(),
                version: VERSION.into(),
                params_digest: digest,
            },
        })
    }

    pub fn run_count(&self) -> usize {
        self.runs.len()
    }

    fn find_policy(&self, policy_ref: &str) -> Result<(&LoadedRun, &PolicyFile), ApiError> {
        let not_found = || ApiError::NotFound(format!("unknown policy {policy_ref:?}"));
        let (run_id, name) = policy_ref.split_once('/').ok_or_else(not_found)?;
        let run = self.runs.get(run_id).ok_or_else(not_found)?;
        let policy = run.policies.get(name).ok_or_else(not_found)?;
        Ok((run, policy))
    }

    /// Validates the request and rolls the policy out once.
    pub fn episode(&self, req: &EpisodeRequest, default_seed: u64) -> Result<TrajectoryResponse, ApiError> {
        if let Some(b) = req.beta {
            if !(0.0..=1.0).contains(&b) {
                return Err(ApiError::BadRequest(format!("beta must lie in [0, 1], got {b}")));
            }
        }
        let in_range = |v: Option<f64>, [lo, hi]: [f64; 2], what: &str| match v {
            Some(x) if !(lo..=hi).contains(&x) => Err(ApiError::BadRequest(format!("{what} must lie in [{lo}, {hi}], got {x}"))),
            _ => Ok(()),
        };
        in_range(req.max_deaths, DEATH_BOUND_RANGE, "max_deaths")?;
        in_range(req.max_eco, ECO_BOUND_RANGE, "max_eco")?;

        let (run, policy) = self.find_policy(&req.policy_ref)?;
        if req.beta.is_some() && !policy.is_goal_conditioned() {
            return Err(ApiError::Unprocessable(format!(
                "{} is a {} policy and does not take beta",
                req.policy_ref,
                policy.kind()
            )));
        }
        let beta = req.beta.unwrap_or(policy.default_beta());
        let constraints = ConstraintSpec {
            max_deaths: req.max_deaths,
            max_eco: req.max_eco,
        };
        let goal = Goal {
            beta: MixingWeight::new(beta).map_err(|e| ApiError::BadRequest(e.to_string()))?,
            constraints,
        };
        let mut config = run.config.clone();
        if let Some(p) = self.params_override {
            config.params = p;
        }
        let env = config.env(policy.observation_mode());
        let seed = req.seed.unwrap_or(default_seed);
        let traj = rollout(policy, &env, goal, seed).map_err(|e| ApiError::Internal(e.to_string()))?;
        Ok(TrajectoryResponse {
            policy_ref: req.policy_ref.clone(),
            policy_kind: policy.kind().to_string(),
            seed,
            beta,
            constraints,
            lockdown_fraction: traj.lockdown_fraction(),
            violations: ViolationFlags {
                health: constraints.max_deaths.is_some_and(|m| traj.health_cum > m),
                eco: constraints.max_eco.is_some_and(|m| traj.eco_cum > m),
            },
            model: ModelSample {
                params_digest: json_digest(&traj.params),
                params: traj.params,
                onset_delay: traj.onset_delay,
            },
            health_cum: traj.health_cum,
            eco_cum: traj.eco_cum,
            records: traj.records,
        })
    }
}

type Shared = State<Arc<AppState>>;

async fn health() -> &'static str {
    "ok"
}

async fn meta(State(state): Shared) -> Json<Meta> {
    Json(state.meta.clone())
}

async fn runs(State(state): Shared) -> Json<Vec<RunSummary>> {
    Json(state.runs.values().map(|r| r.summary.clone()).collect())
}

async fn pareto(State(state): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<ParetoFront>, ApiError> {
    state
        .runs
        .get(&id)
        .map(|r| Json(r.front.clone()))
        .ok_or_else(|| ApiError::NotFound(format!("unknown run {id:?}")))
}

async fn episodes(State(state): Shared, body: Bytes) -> Result<Json<TrajectoryResponse>, ApiError> {
    let req: EpisodeRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("malformed episode request: {e}")))?;
    state.episode(&req, rand::random()).map(Json)
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/api/health", get(health))
        .route("/api/meta", get(meta))
        .route("/api/runs", get(runs))
        .route("/api/runs/{id}/pareto", get(pareto))
        .route("/api/episodes", post(episodes))
        .layer(cors)
        .with_state(state)
}

/// Serves the API until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await
}
