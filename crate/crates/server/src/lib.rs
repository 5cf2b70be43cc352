//! HTTP service for verifying confident test annotations.
//!
//! Verdict writes go through one mutex-guarded append path; reads see a
//! consistent snapshot of the store.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use signforge_core::dataset::DatasetManifest;
use signforge_core::verify::{
    enqueue, verification_stats, verified_set_for, Verdict, VerdictStore, VerificationStats,
    VerifiedTestSet, VerifyPolicy,
};
use signforge_core::Error;

pub struct AppState {
    manifest: DatasetManifest,
    store: Mutex<VerdictStore>,
    media_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(manifest: DatasetManifest, store: VerdictStore, media_dir: Option<PathBuf>) -> Self {
        AppState {
            manifest,
            store: Mutex::new(store),
            media_dir,
        }
    }

    fn store(&self) -> MutexGuard<'_, VerdictStore> {
        // A panic mid-append leaves at worst a torn last line; keep serving.
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct QueueItem {
    pub annotation_id: String,
    pub word: String,
    pub episode_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub confidence: f64,
    pub media_url: String,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownAnnotation(_) => StatusCode::NOT_FOUND,
            e if e.is_io() => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError(status, e.to_string())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/queue/next", get(queue_next))
        .route("/api/verdicts", post(submit_verdict))
        .route("/api/stats", get(stats))
        .route("/api/verified-set", get(verified_set))
        .route("/media/{annotation_id}", get(media))
        .with_state(state)
}

#[derive(Deserialize)]
struct QueueQuery {
    annotator: String,
}

async fn queue_next(State(state): State<Arc<AppState>>, Query(q): Query<QueueQuery>) -> Response {
    let queue = enqueue(&state.manifest);
    let store = state.store();
    let next = queue
        .into_iter()
        .find(|a| !store.has_judged(&a.id, &q.annotator));
    match next {
        None => StatusCode::NO_CONTENT.into_response(),
        Some(a) => Json(QueueItem {
            annotation_id: a.id.clone(),
            word: a.word.clone(),
            episode_id: a.episode_id.clone(),
            start_s: a.clip_interval.start(),
            end_s: a.clip_interval.end(),
            confidence: a.confidence,
            media_url: format!("/media/{}", a.id),
        })
        .into_response(),
    }
}

async fn submit_verdict(
    State(state): State<Arc<AppState>>,
    Json(mut verdict): Json<Verdict>,
) -> Result<(StatusCode, Json<Verdict>), ApiError> {
    verdict.validate(&state.manifest)?;
    verdict.timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    state.store().append(verdict.clone())?;
    Ok((StatusCode::CREATED, Json(verdict)))
}

async fn stats(State(state): State<Arc<AppState>>) -> Json<VerificationStats> {
    Json(verification_stats(&state.manifest, &state.store()))
}

async fn verified_set(
    State(state): State<Arc<AppState>>,
    Query(policy): Query<VerifyPolicy>,
) -> Json<VerifiedTestSet> {
    let store = state.store();
    Json(verified_set_for(&state.manifest, store.all(), policy))
}

fn content_type(path: &Path) -> &'static str {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "mp4" | "m4v" => "video/mp4",
        "webm" => "video/webm",
        "mov" => "video/quicktime",
        "ogv" => "video/ogg",
        "gif" => "image/gif",
        "jpg" | "jpeg" => "image/jpeg",
        "png" => "image/png",
        _ => "application/octet-stream",
    }
}

async fn find_media(dir: &Path, id: &str) -> Option<PathBuf> {
    let mut entries = tokio::fs::read_dir(dir).await.ok()?;
    let mut found = Vec::new();
    while let Ok(Some(entry)) = entries.next_entry().await {
        let path = entry.path();
        if path.file_stem().and_then(|s| s.to_str()) == Some(id) && path.is_file() {
            found.push(path);
        }
    }
    found.sort();
    found.into_iter().next()
}

async fn media(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Response, ApiError> {
    let missing = || ApiError(StatusCode::NOT_FOUND, format!("no media for `{id}`"));
    if id.is_empty() || id.contains(['/', '\\']) || id.contains("..") {
        return Err(missing());
    }
    let dir = state.media_dir.as_deref().ok_or_else(missing)?;
    let path = find_media(dir, &id).await.ok_or_else(missing)?;
    let bytes = tokio::fs::read(&path).await.map_err(|e| {
        ApiError(
            StatusCode::INTERNAL_SERVER_ERROR,
            format!("{}: {e}", path.display()),
        )
    })?;
    Ok(([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response())
}

/// Accepts `host:port` or a bare `:port`, which binds all interfaces.
pub fn normalize_addr(addr: &str) -> String {
    match addr.strip_prefix(':') {
        Some(port) => format!("0.0.0.0:{port}"),
        None => addr.to_string(),
    }
}

pub async fn serve(addr: &str, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(normalize_addr(addr)).await?;
    log::info!(
        "verification service listening on {}",
        listener.local_addr()?
    );
    axum::serve(listener, router(Arc::new(state))).await
}
