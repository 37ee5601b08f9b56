//! HTTP inference service for a trained model.
//!
//! Endpoints: `POST /api/infer`, `GET /api/front?count=K`, `GET /api/meta`,
//! `GET /api/health`. The model is loaded once and shared read-only.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use crate::error::{Error, Result};
use crate::evaluate::{default_hv_ref, predict};
use crate::hypernet::HypernetModel;
use crate::model::ModelFile;
use crate::prefs::{default_eps, interior_rays, PreferenceVector, DIRICHLET_FLOOR};
use crate::problems::{make_mtl_lite, MtlLiteDataset, ProblemId, ProblemSpec, Split};
use crate::train::mtl_losses;

pub const MAX_FRONT_COUNT: usize = 10_000;
pub const DEFAULT_FRONT_COUNT: usize = 25;

enum Backend {
    Moo(ProblemSpec),
    Mtl(MtlLiteDataset),
}

/// A loaded model plus what is needed to score its outputs.
pub struct ServeState {
    file: ModelFile,
    model: HypernetModel,
    backend: Backend,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferResponse {
    pub preference: Vec<f64>,
    pub normalized: bool,
    pub solution: Vec<f64>,
    pub objectives: Vec<f64>,
    pub latency_us: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontEntry {
    pub preference: Vec<f64>,
    pub objectives: Vec<f64>,
}

/// A client error with the offending field, rendered as JSON.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub field: Option<String>,
    pub message: String,
}

impl ApiError {
    fn bad_request(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            field: Some(field.into()),
            message: message.into(),
        }
    }

    fn unprocessable(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            field: Some(field.into()),
            message: message.into(),
        }
    }

    fn internal(err: Error) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            field: None,
            message: err.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message, "field": self.field }))).into_response()
    }
}

impl ServeState {
    pub fn new(file: ModelFile) -> Result<Self> {
        let model = file.model()?;
        let backend = match file.problem {
            ProblemId::MtlLite => Backend::Mtl(make_mtl_lite(file.training.seed)),
            id => {
                let problem = ProblemSpec::new(id)?;
                if model.arch.output_dim != problem.n || model.arch.input_dim != problem.m {
                    return Err(Error::ModelMismatch(format!(
                        "model is {} → {}, {} needs {} → {}",
                        model.arch.input_dim,
                        model.arch.output_dim,
                        problem.name(),
                        problem.m,
                        problem.n
                    )));
                }
                Backend::Moo(problem)
            }
        };
        Ok(Self { file, model, backend })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(ModelFile::load(path)?)
    }

    pub fn m(&self) -> usize {
        self.model.arch.input_dim
    }

    fn eps_default(&self) -> f64 {
        default_eps(self.m())
    }

    /// Clamps entries below the floor, rescales to sum one, and reports
    /// whether the input had to change.
    pub fn normalize(&self, raw: &[f64]) -> std::result::Result<(PreferenceVector, bool), ApiError> {
        let m = self.m();
        if raw.len() != m {
            return Err(ApiError::unprocessable(
                "preference",
                format!("expected {m} entries, got {}", raw.len()),
            ));
        }
        if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
            return Err(ApiError::unprocessable(
                format!("preference[{i}]"),
                "entry is not finite",
            ));
        }
        if let Some(i) = raw.iter().position(|&v| v < 0.0) {
            return Err(ApiError::unprocessable(format!("preference[{i}]"), "entry is negative"));
        }
        let clamped: Vec<f64> = raw.iter().map(|&v| v.max(DIRICHLET_FLOOR)).collect();
        let r =
            PreferenceVector::normalized(&clamped).map_err(|e| ApiError::unprocessable("preference", e.to_string()))?;
        let changed = r.as_slice() != raw;
        Ok((r, changed))
    }

    /// Solution and objectives for one normalized preference.
    pub fn solve(&self, r: &PreferenceVector) -> Result<(Vec<f64>, Vec<f64>)> {
        match &self.backend {
            Backend::Moo(problem) => {
                let p = predict(problem, &self.model, r)?;
                Ok((p.x, p.objectives))
            }
            Backend::Mtl(dataset) => {
                let theta = self.model.forward(r)?;
                let losses = mtl_losses(&self.model, dataset, Split::Val, r)?;
                Ok((theta, losses))
            }
        }
    }

    pub fn infer(&self, raw: &[f64]) -> std::result::Result<InferResponse, ApiError> {
        let started = Instant::now();
        let (r, normalized) = self.normalize(raw)?;
        let (solution, objectives) = self.solve(&r).map_err(ApiError::internal)?;
        Ok(InferResponse {
            preference: r.as_slice().to_vec(),
            normalized,
            solution,
            objectives,
            latency_us: started.elapsed().as_micros() as u64,
        })
    }

    pub fn front(&self, count: usize) -> std::result::Result<Vec<FrontEntry>, ApiError> {
        if count == 0 || count > MAX_FRONT_COUNT {
            return Err(ApiError::unprocessable(
                "count",
                format!("count must be between 1 and {MAX_FRONT_COUNT}"),
            ));
        }
        let rays = interior_rays(self.m(), count, self.eps_default()).map_err(ApiError::internal)?;
        rays.iter()
            .map(|r| {
                let (_, objectives) = self.solve(r).map_err(ApiError::internal)?;
                Ok(FrontEntry {
                    preference: r.as_slice().to_vec(),
                    objectives,
                })
            })
            .collect()
    }

    pub fn meta(&self) -> Value {
        let m = self.m();
        json!({
            "problem": self.file.problem,
            "m": m,
            "n": self.model.arch.output_dim,
            "scalarization": self.file.scalarization,
            "training": self.file.training,
            "arch": self.file.arch,
            "hv_ref": default_hv_ref(m),
            "eps_default": self.eps_default(),
        })
    }
}

fn parse_preference(body: &[u8]) -> std::result::Result<Vec<f64>, ApiError> {
    let value: Value =
        serde_json::from_slice(body).map_err(|e| ApiError::bad_request("body", format!("invalid JSON: {e}")))?;
    let object = value
        .as_object()
        .ok_or_else(|| ApiError::bad_request("body", "expected a JSON object"))?;
    let entries = object
        .get("preference")
        .ok_or_else(|| ApiError::bad_request("preference", "missing field"))?
        .as_array()
        .ok_or_else(|| ApiError::bad_request("preference", "expected an array of numbers"))?;
    entries
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_f64()
                .ok_or_else(|| ApiError::bad_request(format!("preference[{i}]"), "expected a number"))
        })
        .collect()
}

async fn infer_handler(State(state): State<Arc<ServeState>>, body: Bytes) -> Response {
    match parse_preference(&body).and_then(|raw| state.infer(&raw)) {
        Ok(resp) => Json(resp).into_response(),
        Err(e) => e.into_response(),
    }
}

#[derive(Deserialize)]
struct FrontQuery {
    count: Option<String>,
}

async fn front_handler(State(state): State<Arc<ServeState>>, Query(q): Query<FrontQuery>) -> Response {
    let count = match q.count.as_deref().map(str::parse::<usize>) {
        None => DEFAULT_FRONT_COUNT,
        Some(Ok(k)) => k,
        Some(Err(_)) => return ApiError::bad_request("count", "expected a non-negative integer").into_response(),
    };
    match tokio::task::spawn_blocking(move || state.front(count)).await {
        Ok(Ok(entries)) => Json(entries).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => ApiError::internal(Error::Contract(e.to_string())).into_response(),
    }
}

async fn meta_handler(State(state): State<Arc<ServeState>>) -> Json<Value> {
    Json(state.meta())
}

async fn health_handler() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

pub fn router(state: Arc<ServeState>) -> Router {
    Router::new()
        .route("/api/infer", post(infer_handler))
        .route("/api/front", get(front_handler))
        .route("/api/meta", get(meta_handler))
        .route("/api/health", get(health_handler))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves until interrupted.
pub async fn serve(state: Arc<ServeState>, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

pub fn serve_blocking(model: &Path, addr: SocketAddr) -> Result<()> {
    let state = Arc::new(ServeState::load(model)?);
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve(state, addr))
}
