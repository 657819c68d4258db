//! HTTP service over the pipeline, plus an HTTP front for the stub backend.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use covergen_core::augment::{generate_new_titles, AugmentError, Provenance, Sampling, Vocabulary};
use covergen_core::genai::{
    stub_handle_generate, stub_handle_score, CoverBackend, ErrorBody, GenerateRequest, HealthResponse, ScoreRequest,
    StubBackend,
};
use covergen_core::pipeline::{
    list_runs, load_image, load_run, persist_run, execute_run, PipelineError, RunContext, RunManifest, RunParams,
    RunStatus,
};
use covergen_core::wndb::Lexicon;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use uuid::Uuid;

use crate::config::ServiceConfig;

/// Upper bound on `count` for title previews.
pub const MAX_AUGMENT_COUNT: usize = 1000;

#[derive(Clone)]
pub struct AppState {
    pub lexicon: Arc<Lexicon>,
    pub vocabulary: Arc<Vocabulary>,
    pub backend: Arc<dyn CoverBackend>,
    pub config: Arc<ServiceConfig>,
}

impl AppState {
    pub fn from_config(config: ServiceConfig) -> anyhow::Result<Self> {
        config.validate()?;
        Ok(Self {
            lexicon: Arc::new(config.load_lexicon()?),
            vocabulary: Arc::new(config.load_vocabulary()?),
            backend: config.backend()?,
            config: Arc::new(config),
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: serde_json::to_value(ErrorBody { error: message.into() }).expect("error body serializes"),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::InvalidParams(_) | PipelineError::Augment(_) => Self::bad_request(e.to_string()),
            PipelineError::NotFound(_) => Self::not_found(e.to_string()),
            _ => Self::internal(e.to_string()),
        }
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn parse_run_id(id: &str) -> Result<Uuid, ApiError> {
    Uuid::parse_str(id).map_err(|_| ApiError::not_found(format!("run {id} not found")))
}

pub fn run_url(run_id: &Uuid) -> String {
    format!("/api/runs/{run_id}")
}

pub fn image_url(run_id: &Uuid, index: usize) -> String {
    format!("/api/runs/{run_id}/images/{index}")
}

/// Manifest JSON with a `url` on each cover. Deserializes back to the plain manifest.
pub fn manifest_view(manifest: &RunManifest) -> Value {
    let mut value = serde_json::to_value(manifest).expect("manifest serializes");
    if let Some(covers) = value.get_mut("covers").and_then(Value::as_array_mut) {
        for (i, cover) in covers.iter_mut().enumerate() {
            cover["url"] = Value::String(image_url(&manifest.run_id, i));
        }
    }
    value
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRunRequest {
    pub title: String,
    #[serde(default)]
    pub num_variants: Option<usize>,
    #[serde(default)]
    pub top_k: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl CreateRunRequest {
    pub fn to_params(&self, cfg: &ServiceConfig) -> RunParams {
        let num_variants = self.num_variants.unwrap_or(cfg.num_variants);
        let mut params = RunParams::new(self.title.clone());
        params.num_variants = num_variants;
        // an explicit top_k is validated as given; the configured default shrinks to fit
        params.top_k = self.top_k.unwrap_or(cfg.top_k.min(num_variants + 1));
        params.seed = self.seed.unwrap_or(0);
        params.image_size = (cfg.image_size, cfg.image_size);
        params.batch_cap = cfg.batch_cap;
        params.parallelism = cfg.parallelism;
        params
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentRequest {
    pub title: String,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mode: Option<Sampling>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentCandidate {
    pub title: String,
    pub tokens: Vec<String>,
    pub provenance: Vec<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentResponse {
    pub title: String,
    pub candidates: Vec<AugmentCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: Uuid,
    pub created_at: DateTime<Utc>,
    pub input_title: String,
    pub status: RunStatus,
    pub covers: usize,
    pub kept: usize,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunList {
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceHealth {
    pub status: String,
    pub backend: String,
    pub lexicon_synsets: usize,
    pub vocabulary_words: usize,
}

async fn create_run(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateRunRequest = parse_body(&body)?;
    if req.title.trim().is_empty() {
        return Err(ApiError::bad_request("title must not be empty"));
    }
    let params = req.to_params(&state.config);
    params.validate()?;
    let ctx = RunContext::new(Uuid::new_v4(), Utc::now());
    let st = state.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let outcome = execute_run(&params, &st.lexicon, &st.vocabulary, st.backend.as_ref(), ctx)?;
        persist_run(&outcome.manifest, &outcome.images, &st.config.run_store)?;
        Ok::<_, PipelineError>(outcome)
    })
    .await
    .map_err(|e| ApiError::internal(format!("run task failed: {e}")))??;

    let manifest = outcome.manifest;
    tracing::info!(run_id = %manifest.run_id, status = ?manifest.status, covers = manifest.covers.len(), "run finished");
    if manifest.status == RunStatus::Failed {
        let body = serde_json::json!({
            "error": manifest.error.clone().unwrap_or_else(|| "backend failure".into()),
            "run_id": manifest.run_id,
            "manifest_url": run_url(&manifest.run_id),
        });
        return Ok((StatusCode::BAD_GATEWAY, Json(body)).into_response());
    }
    let location = HeaderValue::from_str(&run_url(&manifest.run_id)).expect("ascii url");
    Ok((StatusCode::CREATED, [(header::LOCATION, location)], Json(manifest_view(&manifest))).into_response())
}

async fn get_runs(State(state): State<AppState>) -> Result<Json<RunList>, ApiError> {
    let root = state.config.run_store.clone();
    let runs = tokio::task::spawn_blocking(move || list_runs(&root))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    let runs = runs
        .into_iter()
        .map(|m| RunSummary {
            url: run_url(&m.run_id),
            run_id: m.run_id,
            created_at: m.created_at,
            input_title: m.params.input_title.clone(),
            status: m.status,
            covers: m.covers.len(),
            kept: m.kept().count(),
        })
        .collect();
    Ok(Json(RunList { runs }))
}

async fn get_run(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let run_id = parse_run_id(&id)?;
    let root = state.config.run_store.clone();
    let manifest = tokio::task::spawn_blocking(move || load_run(&root, &run_id))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(manifest_view(&manifest)))
}

async fn get_image(
    State(state): State<AppState>,
    Path((id, n)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let run_id = parse_run_id(&id)?;
    let index: usize = n.parse().map_err(|_| ApiError::not_found(format!("image {n} not found")))?;
    let root = state.config.run_store.clone();
    let bytes = tokio::task::spawn_blocking(move || load_image(&root, &run_id, index))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn augment(State(state): State<AppState>, body: Bytes) -> Result<Json<AugmentResponse>, ApiError> {
    let req: AugmentRequest = parse_body(&body)?;
    if req.title.trim().is_empty() {
        return Err(ApiError::bad_request("title must not be empty"));
    }
    let count = req.count.unwrap_or(state.config.num_variants);
    if count == 0 || count > MAX_AUGMENT_COUNT {
        return Err(ApiError::bad_request(format!("count must be in 1..={MAX_AUGMENT_COUNT}")));
    }
    let titles = generate_new_titles(
        &req.title,
        count,
        &state.lexicon,
        &state.vocabulary,
        req.seed.unwrap_or(0),
        req.mode.unwrap_or_default(),
    )
    .map_err(|e: AugmentError| ApiError::bad_request(e.to_string()))?;
    let candidates = titles
        .into_iter()
        .map(|c| AugmentCandidate {
            title: c.text(),
            tokens: c.tokens,
            provenance: c.provenance,
        })
        .collect();
    Ok(Json(AugmentResponse {
        title: req.title,
        candidates,
    }))
}

async fn health(State(state): State<AppState>) -> Json<ServiceHealth> {
    Json(ServiceHealth {
        status: "ok".into(),
        backend: state.backend.identity(),
        lexicon_synsets: state.lexicon.len(),
        vocabulary_words: state.vocabulary.len(),
    })
}

fn cors(origins: &[String]) -> CorsLayer {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    if origins.iter().any(|o| o == "*") {
        return layer.allow_origin(Any);
    }
    let list: Vec<HeaderValue> = origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()).collect();
    layer.allow_origin(AllowOrigin::list(list))
}

pub fn app(state: AppState) -> Router {
    let cors = cors(&state.config.cors_origins);
    Router::new()
        .route("/api/runs", post(create_run).get(get_runs))
        .route("/api/runs/{id}", get(get_run))
        .route("/api/runs/{id}/images/{n}", get(get_image))
        .route("/api/titles/augment", post(augment))
        .route("/api/health", get(health))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .layer(cors)
        .with_state(state)
}

async fn stub_generate_route(body: Bytes) -> Result<Response, ApiError> {
    let req: GenerateRequest = parse_body(&body)?;
    let resp = tokio::task::spawn_blocking(move || stub_handle_generate(&req))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(resp).into_response())
}

async fn stub_score_route(body: Bytes) -> Result<Response, ApiError> {
    let req: ScoreRequest = parse_body(&body)?;
    let resp = tokio::task::spawn_blocking(move || stub_handle_score(&req))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(resp).into_response())
}

/// `POST /generate`, `POST /score`, `GET /health` served by the stub backend.
pub fn stub_backend_app() -> Router {
    Router::new()
        .route("/generate", post(stub_generate_route))
        .route("/score", post(stub_score_route))
        .route(
            "/health",
            get(|| async {
                Json(HealthResponse {
                    status: "ok".into(),
                    model: StubBackend.identity(),
                })
            }),
        )
}

async fn shutdown_signal() {
    if tokio::signal::ctrl_c().await.is_err() {
        std::future::pending::<()>().await;
    }
}

pub async fn serve_router(router: Router, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router).with_graceful_shutdown(shutdown_signal()).await?;
    Ok(())
}

pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let addr = config.listen.clone();
    std::fs::create_dir_all(&config.run_store)?;
    let state = AppState::from_config(config)?;
    serve_router(app(state), &addr).await
}
