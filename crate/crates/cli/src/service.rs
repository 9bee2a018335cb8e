//! HTTP query service over an immutable index snapshot.
//!
//! ```text
//! GET  /api/health                 {status, index_count, dim, metric_default, k_max}
//! GET  /api/labels                 {labels: [{label, count}], total}
//! POST /api/query                  JSON {record_id, k, metric} or multipart (image, record_id, k, metric)
//! GET  /api/patch/{id}/thumbnail   PNG, longest side at most 256 px
//! GET  /api/report/latest          latest evaluation report
//! GET  /*                          static files
//! ```
//!
//! `k` and `metric` may also be given as query-string parameters; body values
//! win. The query record itself never appears in its own results: `record_id`
//! names it, and an upload whose embedding equals an indexed vector bit for bit
//! is taken to be that entry. Errors are `{"error": {"category", "message"}}`.

use std::net::SocketAddr;
use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use image::imageops::FilterType;
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;
use ucbmir_core::dataset::{decode_image_bytes, decode_patch, encode_png, Manifest};
use ucbmir_core::eval::EvalReport;
use ucbmir_core::index::{embed_images, EmbeddingIndex, IndexError, Metric};
use ucbmir_core::model::CaeModel;

use crate::error::{Category, CliError};

pub const DEFAULT_K: usize = 5;
pub const MAX_K: usize = 100;
pub const THUMBNAIL_MAX: u32 = 256;
const UPLOAD_LIMIT: usize = 32 * 1024 * 1024;
const ID_ESCAPE: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'_').remove(b'.');

/// Everything a request may read. Never mutated after startup.
pub struct AppState {
    pub index: EmbeddingIndex,
    pub model: CaeModel,
    /// Image paths and labels for thumbnails and `record_id` queries.
    pub manifest: Option<Manifest>,
    /// Directory holding `latest.json`.
    pub report_dir: Option<PathBuf>,
    pub metric_default: Metric,
}

impl AppState {
    pub fn k_max(&self) -> usize {
        MAX_K.min(self.index.len().saturating_sub(1)).max(1)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    category: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, category: &'static str, message: impl Into<String>) -> Self {
        Self { status, category, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": { "category": self.category, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

impl From<IndexError> for ApiError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::KOutOfRange { .. } | IndexError::ZeroVector | IndexError::DimMismatch { .. } => {
                ApiError::bad_request(e.to_string())
            }
            IndexError::UnknownId(_) => ApiError::not_found(e.to_string()),
            _ => ApiError::internal(e.to_string()),
        }
    }
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    index_count: usize,
    dim: usize,
    metric_default: Metric,
    k_max: usize,
}

#[derive(Serialize)]
struct LabelCount {
    label: String,
    count: usize,
}

#[derive(Serialize)]
struct Labels {
    labels: Vec<LabelCount>,
    total: usize,
}

#[derive(Debug, Default, Deserialize)]
pub struct QueryParams {
    pub k: Option<usize>,
    pub metric: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
struct JsonQuery {
    record_id: Option<String>,
    k: Option<usize>,
    metric: Option<String>,
}

#[derive(Default)]
struct QueryRequest {
    image: Option<Bytes>,
    record_id: Option<String>,
    k: Option<usize>,
    metric: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ResultItem {
    pub id: String,
    pub label: String,
    pub distance: f64,
    pub thumbnail_url: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct QueryResponse {
    pub query_id: String,
    /// Known when the query names a labeled record.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query_label: Option<String>,
    pub k: usize,
    pub metric: Metric,
    pub results: Vec<ResultItem>,
}

pub fn thumbnail_url(id: &str) -> String {
    format!("/api/patch/{}/thumbnail", utf8_percent_encode(id, ID_ESCAPE))
}

pub fn router(state: Arc<AppState>, static_dir: Option<&FsPath>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/labels", get(labels))
        .route("/api/query", post(query))
        .route("/api/patch/{id}/thumbnail", get(thumbnail))
        .route("/api/report/latest", get(latest_report))
        .layer(DefaultBodyLimit::max(UPLOAD_LIMIT))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(|| async { ApiError::not_found("no such route") }),
    }
}

async fn health(State(s): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok",
        index_count: s.index.len(),
        dim: s.index.dim(),
        metric_default: s.metric_default,
        k_max: s.k_max(),
    })
}

async fn labels(State(s): State<Arc<AppState>>) -> Json<Labels> {
    let labels = s.index.label_counts().into_iter().map(|(label, count)| LabelCount { label, count }).collect();
    Json(Labels { labels, total: s.index.len() })
}

async fn read_multipart(mut mp: Multipart) -> Result<QueryRequest, ApiError> {
    let mut q = QueryRequest::default();
    let malformed =
        |e: axum::extract::multipart::MultipartError| ApiError::bad_request(format!("malformed multipart body: {e}"));
    while let Some(field) = mp.next_field().await.map_err(malformed)? {
        let name = field.name().unwrap_or("").to_string();
        match name.as_str() {
            "image" | "file" => q.image = Some(field.bytes().await.map_err(malformed)?),
            "record_id" => q.record_id = Some(field.text().await.map_err(malformed)?),
            "k" => {
                let text = field.text().await.map_err(malformed)?;
                q.k = Some(text.trim().parse().map_err(|_| ApiError::bad_request(format!("bad k `{text}`")))?);
            }
            "metric" => q.metric = Some(field.text().await.map_err(malformed)?),
            other => return Err(ApiError::bad_request(format!("unexpected form field `{other}`"))),
        }
    }
    if q.image.is_none() {
        return Err(ApiError::bad_request("multipart query needs an `image` field"));
    }
    Ok(q)
}

async fn query(
    State(s): State<Arc<AppState>>,
    Query(params): Query<QueryParams>,
    req: Request,
) -> Result<Json<QueryResponse>, ApiError> {
    let content_type =
        req.headers().get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).unwrap_or("").to_ascii_lowercase();
    let mut q = if content_type.starts_with("multipart/form-data") {
        let mp = Multipart::from_request(req, &()).await.map_err(|e| ApiError::bad_request(e.body_text()))?;
        read_multipart(mp).await?
    } else if content_type.starts_with("application/json") {
        let Json(body) =
            Json::<JsonQuery>::from_request(req, &()).await.map_err(|e| ApiError::bad_request(e.body_text()))?;
        QueryRequest { image: None, record_id: body.record_id, k: body.k, metric: body.metric }
    } else {
        return Err(ApiError::new(
            StatusCode::UNSUPPORTED_MEDIA_TYPE,
            "unsupported_media_type",
            "send application/json or multipart/form-data",
        ));
    };
    q.k = q.k.or(params.k);
    q.metric = q.metric.or(params.metric);

    let k = q.k.unwrap_or(DEFAULT_K);
    if k == 0 || k > s.k_max() {
        return Err(ApiError::bad_request(format!("k must be in 1..={}, got {k}", s.k_max())));
    }
    let metric = match &q.metric {
        Some(m) => m.parse::<Metric>().map_err(ApiError::bad_request)?,
        None => s.metric_default,
    };
    let state = s.clone();
    tokio::task::spawn_blocking(move || run_query(&state, q, k, metric))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map(Json)
}

fn embed_one(state: &AppState, image: ucbmir_core::numerics::Tensor) -> Result<Vec<f32>, ApiError> {
    let mut rows = embed_images(&state.model, &image)?;
    Ok(rows.remove(0))
}

fn run_query(state: &AppState, q: QueryRequest, k: usize, metric: Metric) -> Result<QueryResponse, ApiError> {
    let size = state.model.config.input_size;
    let record = q.record_id.as_deref().and_then(|id| state.manifest.as_ref()?.get(id));
    let (query_id, vector) = match (&q.image, &q.record_id) {
        (Some(bytes), id) => {
            let image = decode_image_bytes(bytes, size).map_err(|e| {
                ApiError::new(StatusCode::BAD_REQUEST, "bad_image", format!("cannot decode image: {e}"))
            })?;
            (id.clone().unwrap_or_else(|| "upload".into()), embed_one(state, image)?)
        }
        (None, Some(id)) => {
            let vector = match record {
                Some(r) => embed_one(state, decode_patch(r, size).map_err(|e| ApiError::internal(e.to_string()))?)?,
                None => state
                    .index
                    .get(id)
                    .map(|e| e.vector.clone())
                    .ok_or_else(|| ApiError::not_found(format!("unknown record `{id}`")))?,
            };
            (id.clone(), vector)
        }
        (None, None) => return Err(ApiError::bad_request("query needs `record_id` or an uploaded image")),
    };
    let query_label = record
        .map(|r| r.label.clone())
        .or_else(|| q.record_id.as_deref().and_then(|id| state.index.get(id)).map(|e| e.label.clone()));
    // An anonymous upload of an indexed image is treated as that record.
    let exclude =
        q.record_id.clone().or_else(|| state.index.entries().iter().find(|e| e.vector == vector).map(|e| e.id.clone()));
    let result = state.index.top_k(&query_id, &vector, k, metric, exclude.as_deref())?;
    Ok(QueryResponse {
        query_id,
        query_label,
        k,
        metric,
        results: result
            .hits
            .into_iter()
            .map(|h| ResultItem { thumbnail_url: thumbnail_url(&h.id), id: h.id, label: h.label, distance: h.distance })
            .collect(),
    })
}

fn render_thumbnail(path: &FsPath) -> Result<Vec<u8>, ApiError> {
    let img = image::open(path).map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
    let img = if img.width().max(img.height()) > THUMBNAIL_MAX {
        img.resize(THUMBNAIL_MAX, THUMBNAIL_MAX, FilterType::Triangle)
    } else {
        img
    };
    Ok(encode_png(&img.to_rgb8()))
}

async fn thumbnail(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let path = s
        .manifest
        .as_ref()
        .and_then(|m| m.get(&id))
        .map(|r| r.path.clone())
        .ok_or_else(|| ApiError::not_found(format!("no image for `{id}`")))?;
    let png = tokio::task::spawn_blocking(move || render_thumbnail(&path))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn latest_report(State(s): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let dir = s.report_dir.as_ref().ok_or_else(|| ApiError::not_found("no report directory configured"))?;
    let path = dir.join("latest.json");
    let text = tokio::fs::read_to_string(&path).await.map_err(|_| ApiError::not_found("no evaluation report yet"))?;
    let report = EvalReport::from_json(&text).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], report.to_json()).into_response())
}

/// Binds `addr` and serves until interrupted.
pub async fn serve(state: Arc<AppState>, static_dir: Option<PathBuf>, addr: SocketAddr) -> Result<(), CliError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::new(Category::Service, format!("cannot bind {addr}: {e}")))?;
    log::info!("serving {} entries on http://{addr}", state.index.len());
    let app = router(state, static_dir.as_deref());
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::new(Category::Service, e.to_string()))
}
