//! HTTP endpoints over immutable tapestry snapshots.
//!
//! Snapshot 0 is the tapestry the service was started with; every accepted
//! observation adds a new snapshot and leaves the old ones readable.

use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tapestry_core::scenario::{
    evaluate_scenario, Assignment, CategoryBounds, HistogramSpec, ScenarioState, Summary, DEFAULT_ALPHA,
};
use tapestry_core::tapestry::{Observation, Tapestry};
use tapestry_core::Error;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub const DEFAULT_BINS: usize = 20;

#[derive(Default)]
pub struct AppState {
    snapshots: RwLock<Vec<Arc<Tapestry>>>,
}

impl AppState {
    pub fn new(initial: Tapestry) -> Self {
        AppState { snapshots: RwLock::new(vec![Arc::new(initial)]) }
    }

    pub fn snapshot(&self, id: usize) -> Option<Arc<Tapestry>> {
        self.snapshots.read().expect("snapshot lock").get(id).cloned()
    }

    fn push(&self, t: Tapestry) -> usize {
        let mut s = self.snapshots.write().expect("snapshot lock");
        s.push(Arc::new(t));
        s.len() - 1
    }
}

pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, kind: "bad_request", message: message.into() }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::AlreadyObserved { .. } => StatusCode::CONFLICT,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError { status, kind: e.kind(), message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.kind, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn lookup(state: &AppState, id: Option<usize>) -> Result<(usize, Arc<Tapestry>), ApiError> {
    let id = id.unwrap_or(0);
    let t = state.snapshot(id).ok_or_else(|| ApiError {
        status: StatusCode::NOT_FOUND,
        kind: "unknown_snapshot",
        message: format!("no snapshot {id}"),
    })?;
    Ok((id, t))
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

fn histogram_spec(bins: Option<usize>) -> Result<HistogramSpec, ApiError> {
    let bins = bins.unwrap_or(DEFAULT_BINS);
    if bins == 0 || bins > 10_000 {
        return Err(ApiError::bad_request(format!("bins must lie in 1..=10000, got {bins}")));
    }
    Ok(HistogramSpec { bins, range: None })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HorizonBounds {
    pub horizon: usize,
    pub season: String,
    pub bounds: Option<CategoryBounds>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TapestryInfo {
    pub snapshot: usize,
    pub anchor: String,
    pub k: usize,
    pub threads: usize,
    pub target: String,
    pub coding: String,
    pub embedding_dim: usize,
    pub observations: Vec<Observation>,
    pub category_bounds: Vec<HorizonBounds>,
    pub degeneracy_events: usize,
}

#[derive(Deserialize)]
pub struct SnapshotQuery {
    snapshot: Option<usize>,
}

async fn get_tapestry(
    State(state): State<Arc<AppState>>,
    q: Result<Query<SnapshotQuery>, QueryRejection>,
) -> ApiResult<TapestryInfo> {
    let Query(q) = q.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let (id, t) = lookup(&state, q.snapshot)?;
    Ok(Json(TapestryInfo {
        snapshot: id,
        anchor: t.anchor.to_string(),
        k: t.k,
        threads: t.len(),
        target: t.target_name.clone(),
        coding: t.coding.clone(),
        embedding_dim: t.embedding_dim,
        observations: t.observation_log.clone(),
        category_bounds: (1..=t.k)
            .map(|h| HorizonBounds { horizon: h, season: t.season_at(h).to_string(), bounds: t.bounds_at(h) })
            .collect(),
        degeneracy_events: t.degeneracy_events,
    }))
}

#[derive(Deserialize)]
pub struct DensityQuery {
    horizon: usize,
    bins: Option<usize>,
    snapshot: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DensityResponse {
    pub snapshot: usize,
    pub summary: Summary,
}

async fn get_density(
    State(state): State<Arc<AppState>>,
    q: Result<Query<DensityQuery>, QueryRejection>,
) -> ApiResult<DensityResponse> {
    let Query(q) = q.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let (id, t) = lookup(&state, q.snapshot)?;
    let spec = histogram_spec(q.bins)?;
    let summary = ScenarioState::new(&t, DEFAULT_ALPHA)?.conditional_summary(q.horizon, &spec)?;
    Ok(Json(DensityResponse { snapshot: id, summary }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioRequest {
    #[serde(default)]
    pub snapshot: Option<usize>,
    pub assignments: Vec<Assignment>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioResponse {
    pub snapshot: usize,
    pub alpha: f64,
    pub assignments: Vec<Assignment>,
    /// One per horizon after the last assigned or observed one.
    pub summaries: Vec<Summary>,
}

async fn post_scenario(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<ScenarioResponse> {
    let req: ScenarioRequest = parse_body(&body)?;
    let (id, t) = lookup(&state, req.snapshot)?;
    let alpha = req.alpha.unwrap_or(DEFAULT_ALPHA);
    let spec = histogram_spec(req.bins)?;
    let summaries = evaluate_scenario(&t, &req.assignments, alpha, &spec)?;
    let mut assignments = req.assignments;
    assignments.sort_by_key(|a| a.horizon);
    Ok(Json(ScenarioResponse { snapshot: id, alpha, assignments, summaries }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObserveRequest {
    #[serde(default)]
    pub snapshot: Option<usize>,
    pub horizon: usize,
    /// Target anomaly; use `values` for multivariate tapestries.
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ObserveResponse {
    pub snapshot: usize,
    pub parent: usize,
    pub horizon: usize,
    pub degeneracy_events: usize,
}

async fn post_observe(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<ObserveResponse> {
    let req: ObserveRequest = parse_body(&body)?;
    let (parent, t) = lookup(&state, req.snapshot)?;
    let next = match (req.value, &req.values) {
        (Some(v), None) => t.reweight(req.horizon, v)?,
        (None, Some(vs)) => t.reweight_multi(req.horizon, vs)?,
        _ => return Err(ApiError::bad_request("give exactly one of `value` or `values`")),
    };
    let degeneracy_events = next.degeneracy_events;
    let id = state.push(next);
    log::info!("snapshot {id}: horizon {} observed on snapshot {parent}", req.horizon);
    Ok(Json(ObserveResponse { snapshot: id, parent, horizon: req.horizon, degeneracy_events }))
}

/// CORS for the given origins; any origin when the list is empty.
pub fn cors(origins: &[String]) -> Result<CorsLayer, String> {
    let layer = CorsLayer::new().allow_methods([Method::GET, Method::POST]).allow_headers([header::CONTENT_TYPE]);
    if origins.is_empty() {
        return Ok(layer.allow_origin(Any));
    }
    let values = origins
        .iter()
        .map(|o| HeaderValue::from_str(o).map_err(|_| format!("bad origin {o:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(layer.allow_origin(AllowOrigin::list(values)))
}

pub fn router(state: Arc<AppState>, cors: CorsLayer) -> Router {
    Router::new()
        .route("/tapestry", get(get_tapestry))
        .route("/density", get(get_density))
        .route("/scenario", post(post_scenario))
        .route("/observe", post(post_observe))
        .layer(cors)
        .with_state(state)
}

pub fn app(initial: Tapestry) -> Router {
    router(Arc::new(AppState::new(initial)), cors(&[]).expect("no origins"))
}
