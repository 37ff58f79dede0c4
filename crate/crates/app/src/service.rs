//! HTTP scoring and adjudication service.
//!
//! Scoring handlers share one immutable model and encoder. Queue handlers
//! go through a mutex around the adjudication store, which keeps the event
//! log single-writer.

use std::future::Future;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Request, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use burnout_core::encoder::TextEncoder;
use burnout_core::head::{self, HeadError, ModelArtifact, TrainConfig};
use burnout_core::labeling::{
    map_manual_label, AdjudicationStore, LabelingError, ManualLabel, PendingItem, QueueStats, StoreError,
    TrainingLabelOutcome,
};
use burnout_core::Class;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;
use tracing::{info, warn};

pub const DEFAULT_MAX_BATCH: usize = 1000;
const BODY_LIMIT_BYTES: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub burnout_probability: f64,
    pub label: String,
    pub model_version: String,
    pub threshold: f64,
}

/// Artifact metadata served by `GET /v1/model`; weights are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub model_version: String,
    pub schema_version: u32,
    pub encoder_backend_id: String,
    pub vocab_hash: String,
    pub dim: usize,
    pub max_len: usize,
    pub classes: Vec<Class>,
    pub threshold: f64,
    pub train_config: TrainConfig,
    pub data_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueNext {
    pub item: Option<PendingItem>,
    pub stats: QueueStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResponse {
    pub sentence_id: String,
    pub outcome: TrainingLabelOutcome,
    /// Human-readable outcome, e.g. `Positive` or `Excluded: low-confidence`.
    pub outcome_label: String,
    pub version: u32,
    pub stats: QueueStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomePreview {
    pub outcome: TrainingLabelOutcome,
    pub outcome_label: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::Labeling(LabelingError::AlreadyLabeled(_)) => StatusCode::CONFLICT,
            StoreError::Labeling(LabelingError::NotPending(_) | LabelingError::NotLabeled(_)) => StatusCode::NOT_FOUND,
            StoreError::Labeling(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

/// Shared service state.
pub struct ServiceState {
    model: ModelArtifact,
    encoder: TextEncoder,
    info: ModelInfo,
    store: Mutex<AdjudicationStore>,
    max_batch: usize,
}

impl ServiceState {
    /// Fails unless the artifact was trained against `encoder`.
    pub fn new(
        model: ModelArtifact,
        encoder: TextEncoder,
        store: AdjudicationStore,
        max_batch: usize,
    ) -> Result<Self, HeadError> {
        model.check_encoder(&encoder)?;
        model.params()?;
        let info = ModelInfo {
            model_version: model.version(),
            schema_version: model.schema_version,
            encoder_backend_id: model.encoder_backend_id.clone(),
            vocab_hash: model.vocab_hash.clone(),
            dim: model.dim,
            max_len: model.max_len,
            classes: model.classes.clone(),
            threshold: model.threshold,
            train_config: model.train_config.clone(),
            data_fingerprint: model.data_fingerprint.clone(),
        };
        Ok(ServiceState {
            model,
            encoder,
            info,
            store: Mutex::new(store),
            max_batch,
        })
    }

    pub fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn score(&self, texts: &[String]) -> Result<Vec<ScoreResponse>, ApiError> {
        let results = head::score(&self.model, texts, &self.encoder).map_err(|e| {
            warn!(error = %e, "scoring failed");
            ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                format!("scoring backend unavailable: {e}"),
            )
        })?;
        Ok(results
            .into_iter()
            .map(|r| ScoreResponse {
                burnout_probability: r.burnout_probability,
                label: r.label.as_str().to_string(),
                model_version: self.info.model_version.clone(),
                threshold: r.threshold,
            })
            .collect())
    }

    fn with_store<T>(&self, f: impl FnOnce(&mut AdjudicationStore) -> Result<T, ApiError>) -> Result<T, ApiError> {
        let mut guard = self
            .store
            .lock()
            .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "label store is unavailable"))?;
        f(&mut guard)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServiceOptions {
    /// Allowed CORS origins; `"*"` allows any. Empty disables CORS headers.
    pub cors_origins: Vec<String>,
    pub ui_dir: Option<PathBuf>,
}

type Shared = Arc<ServiceState>;

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed request body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))?
}

#[derive(Deserialize)]
struct ScoreRequest {
    text: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum BatchItem {
    Text(String),
    Object { text: String },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum BatchRequest {
    Bare(Vec<BatchItem>),
    Wrapped { texts: Vec<BatchItem> },
}

fn require_text(text: &str, what: &str) -> Result<(), ApiError> {
    if text.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, format!("{what} is empty")));
    }
    Ok(())
}

async fn score_one(State(s): State<Shared>, body: Bytes) -> Result<Json<ScoreResponse>, ApiError> {
    let req: ScoreRequest = parse_json(&body)?;
    require_text(&req.text, "text")?;
    let mut out = blocking(move || s.score(&[req.text])).await?;
    Ok(Json(out.remove(0)))
}

async fn score_batch(State(s): State<Shared>, body: Bytes) -> Result<Json<Vec<ScoreResponse>>, ApiError> {
    let req: BatchRequest = parse_json(&body)?;
    let items = match req {
        BatchRequest::Bare(v) | BatchRequest::Wrapped { texts: v } => v,
    };
    if items.len() > s.max_batch {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("batch of {} exceeds the limit of {}", items.len(), s.max_batch),
        ));
    }
    let texts: Vec<String> = items
        .into_iter()
        .map(|i| match i {
            BatchItem::Text(t) | BatchItem::Object { text: t } => t,
        })
        .collect();
    for (i, t) in texts.iter().enumerate() {
        require_text(t, &format!("item {i}"))?;
    }
    Ok(Json(blocking(move || s.score(&texts)).await?))
}

async fn queue_next(State(s): State<Shared>) -> Result<Json<QueueNext>, ApiError> {
    s.with_store(|store| {
        Ok(Json(QueueNext {
            item: store.next_pending(),
            stats: store.stats(),
        }))
    })
}

async fn queue_stats(State(s): State<Shared>) -> Result<Json<QueueStats>, ApiError> {
    s.with_store(|store| Ok(Json(store.stats())))
}

async fn submit_label(State(s): State<Shared>, body: Bytes) -> Result<(StatusCode, Json<LabelResponse>), ApiError> {
    let label: ManualLabel = parse_json(&body)?;
    let resp = blocking(move || {
        s.with_store(|store| {
            let id = label.sentence_id.clone();
            let outcome = store.submit(label)?;
            Ok(LabelResponse {
                sentence_id: id,
                outcome,
                outcome_label: outcome.to_string(),
                version: 1,
                stats: store.stats(),
            })
        })
    })
    .await?;
    info!(sentence_id = %resp.sentence_id, outcome = %resp.outcome_label, "label recorded");
    Ok((StatusCode::CREATED, Json(resp)))
}

async fn amend_label(State(s): State<Shared>, body: Bytes) -> Result<Json<LabelResponse>, ApiError> {
    let label: ManualLabel = parse_json(&body)?;
    let resp = blocking(move || {
        s.with_store(|store| {
            let id = label.sentence_id.clone();
            let (version, outcome) = store.amend(label)?;
            Ok(LabelResponse {
                sentence_id: id,
                outcome,
                outcome_label: outcome.to_string(),
                version,
                stats: store.stats(),
            })
        })
    })
    .await?;
    info!(sentence_id = %resp.sentence_id, version = resp.version, "label corrected");
    Ok(Json(resp))
}

async fn preview_label(body: Bytes) -> Result<Json<OutcomePreview>, ApiError> {
    let label: ManualLabel = parse_json(&body)?;
    let outcome = map_manual_label(&label);
    Ok(Json(OutcomePreview {
        outcome,
        outcome_label: outcome.to_string(),
    }))
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn model_info(State(s): State<Shared>) -> Json<ModelInfo> {
    Json(s.info.clone())
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no such route")
}

async fn log_requests(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let path = req.uri().path().to_string();
    let started = Instant::now();
    let resp = next.run(req).await;
    info!(
        %method,
        %path,
        status = resp.status().as_u16(),
        latency_ms = started.elapsed().as_secs_f64() * 1e3,
        "request"
    );
    resp
}

fn cors(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    Some(
        CorsLayer::new()
            .allow_origin(allow)
            .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
            .allow_headers([axum::http::header::CONTENT_TYPE]),
    )
}

pub fn router(state: ServiceState, options: &ServiceOptions) -> Router {
    let mut app = Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/model", get(model_info))
        .route("/v1/score", post(score_one))
        .route("/v1/score/batch", post(score_batch))
        .route("/v1/queue/next", get(queue_next))
        .route("/v1/queue/stats", get(queue_stats))
        .route("/v1/labels", post(submit_label))
        .route("/v1/labels/amend", post(amend_label))
        .route("/v1/labels/preview", post(preview_label))
        .with_state(Arc::new(state));
    match &options.ui_dir {
        Some(dir) if dir.is_dir() => {
            app = app.nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true));
        }
        Some(dir) => warn!(dir = %dir.display(), "UI directory not found; /ui is disabled"),
        None => {}
    }
    app = app
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(BODY_LIMIT_BYTES))
        .layer(middleware::from_fn(log_requests));
    if let Some(layer) = cors(&options.cors_origins) {
        app = app.layer(layer);
    }
    app
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}
