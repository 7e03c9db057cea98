//! HTTP JSON interface over [`AnnotationSession`]s.
//!
//! | method | path | body → response |
//! |---|---|---|
//! | POST | `/sessions` | `{clips, seed?, annotator?}` → `{session_id, remaining}` |
//! | GET | `/sessions/{id}/clip` | active clip with `audio_url`, or `clip: null` when done |
//! | POST | `/sessions/{id}/candidates` | `{n?, mode?, anchor_batch_id?, anchor_index?, spread?, thumb_resolution?}` → `{batch_id, mode, seed, thumbnails}` |
//! | POST | `/sessions/{id}/pair` | `{batch_id, candidate_index, clip_id?}` → the stored record |
//! | POST | `/sessions/{id}/skip` | → same shape as `GET …/clip` |
//! | GET | `/sessions/{id}/thumbs/{batch}/{file}` | PNG |
//! | GET | `/sessions/{id}/audio/{clip_id}` | the clip's audio file |
//! | GET | `/dataset/export` | JSON lines |
//!
//! Errors are `{"error": code, "message": text}`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;
use traum_core::dataset::PairRecord;

use crate::error::AnnotateError;
use crate::session::{
    new_session, AnnotationContext, AnnotationSession, CandidateMode, ClipDescriptor,
    DEFAULT_BATCH_SIZE, DEFAULT_SPREAD,
};

type Shared = Arc<Mutex<AnnotationSession>>;

#[derive(Clone)]
pub struct AppState {
    ctx: Arc<AnnotationContext>,
    sessions: Arc<RwLock<HashMap<String, Shared>>>,
    seed: u64,
}

impl AppState {
    pub fn new(ctx: Arc<AnnotationContext>, seed: u64) -> Self {
        AppState {
            ctx,
            sessions: Arc::default(),
            seed,
        }
    }

    fn session(&self, id: &str) -> Result<Shared, ApiError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| AnnotateError::SessionNotFound(id.to_string()).into())
    }
}

pub struct ApiError(AnnotateError);

impl From<AnnotateError> for ApiError {
    fn from(e: AnnotateError) -> Self {
        ApiError(e)
    }
}

pub fn status_of(e: &AnnotateError) -> StatusCode {
    use traum_core::Error as Core;
    match e {
        AnnotateError::SessionNotFound(_) | AnnotateError::UnknownBatch(_) => StatusCode::NOT_FOUND,
        AnnotateError::ClipAlreadyLabeled(_)
        | AnnotateError::NotActiveClip { .. }
        | AnnotateError::NoActiveClip => StatusCode::CONFLICT,
        AnnotateError::EmptyClipList
        | AnnotateError::DuplicateClipId(_)
        | AnnotateError::UnknownStyle
        | AnnotateError::CandidateOutOfRange { .. }
        | AnnotateError::InvalidAnchor(_)
        | AnnotateError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
        AnnotateError::Core(c) => match c {
            Core::EmptyDataset | Core::FileNotFound(_) => StatusCode::NOT_FOUND,
            Core::InvalidConfig(_) | Core::NonFinite(_) | Core::DimensionMismatch { .. } => {
                StatusCode::BAD_REQUEST
            }
            Core::BackendFailure(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        },
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.0.code(), "message": self.0.to_string() });
        (status_of(&self.0), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs `f` on the session off the async executor; session mutations are
/// serialized by its mutex.
async fn with_session<T, F>(state: &AppState, id: &str, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&mut AnnotationSession) -> Result<T, AnnotateError> + Send + 'static,
{
    let shared = state.session(id)?;
    tokio::task::spawn_blocking(move || f(&mut shared.lock().unwrap()))
        .await
        .map_err(|e| AnnotateError::Core(traum_core::Error::BackendFailure(e.to_string())))?
        .map_err(ApiError)
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub clips: Vec<ClipDescriptor>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub annotator: Option<String>,
}

#[derive(Debug, Serialize)]
struct ClipView {
    clip_id: String,
    audio_url: String,
    start_s: f64,
    end_s: f64,
    duration_s: f64,
}

#[derive(Debug, Serialize)]
struct SessionView {
    session_id: String,
    total: usize,
    labeled: usize,
    remaining: usize,
    clip: Option<ClipView>,
}

fn session_view(s: &AnnotationSession) -> SessionView {
    SessionView {
        session_id: s.id().to_string(),
        total: s.total(),
        labeled: s.labeled(),
        remaining: s.remaining(),
        clip: s.active_clip().map(|c| ClipView {
            clip_id: c.clip_id.clone(),
            audio_url: format!("/sessions/{}/audio/{}", s.id(), c.clip_id),
            start_s: c.start_s,
            end_s: c.end_s,
            duration_s: c.end_s - c.start_s,
        }),
    }
}

#[derive(Debug, Deserialize)]
pub struct CandidateRequest {
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub mode: Option<CandidateMode>,
    /// Batch holding the anchor; defaults to the latest batch.
    #[serde(default)]
    pub anchor_batch_id: Option<usize>,
    #[serde(default)]
    pub anchor_index: Option<usize>,
    #[serde(default)]
    pub spread: Option<f64>,
    #[serde(default)]
    pub thumb_resolution: Option<u32>,
}

#[derive(Debug, Serialize)]
struct BatchView {
    batch_id: usize,
    mode: CandidateMode,
    seed: u64,
    thumbnails: Vec<String>,
}

#[derive(Debug, Deserialize)]
pub struct PairRequest {
    pub batch_id: usize,
    pub candidate_index: usize,
    #[serde(default)]
    pub clip_id: Option<String>,
}

async fn create_session(
    State(state): State<AppState>,
    Json(req): Json<CreateSession>,
) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let id = uuid::Uuid::new_v4().simple().to_string();
    let seed = req.seed.unwrap_or(state.seed);
    let annotator = req.annotator.unwrap_or_else(|| "anonymous".into());
    let session = new_session(id.clone(), req.clips, state.ctx.clone(), seed, annotator)?;
    let remaining = session.remaining();
    state
        .sessions
        .write()
        .unwrap()
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    Ok((
        StatusCode::CREATED,
        Json(json!({ "session_id": id, "remaining": remaining })),
    ))
}

async fn get_clip(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<SessionView>> {
    with_session(&state, &id, |s| Ok(session_view(s)))
        .await
        .map(Json)
}

async fn skip_clip(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<SessionView>> {
    with_session(&state, &id, |s| {
        s.skip()?;
        Ok(session_view(s))
    })
    .await
    .map(Json)
}

async fn candidates(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<CandidateRequest>,
) -> ApiResult<Json<BatchView>> {
    let sid = id.clone();
    with_session(&state, &id, move |s| {
        let n = req.n.unwrap_or(DEFAULT_BATCH_SIZE);
        let batch = match req.mode.unwrap_or(CandidateMode::Random) {
            CandidateMode::Random => s.sample_candidates(n, req.thumb_resolution)?,
            CandidateMode::Refine => {
                let index = req.anchor_index.ok_or_else(|| {
                    AnnotateError::InvalidRequest("refine requires anchor_index".into())
                })?;
                let batch_id = match req.anchor_batch_id {
                    Some(b) => b,
                    None => s.history().len().checked_sub(1).ok_or_else(|| {
                        AnnotateError::InvalidRequest("no batch to refine".into())
                    })?,
                };
                let anchor = s.batch(batch_id)?.style(index)?.to_owned();
                let spread = req.spread.unwrap_or(DEFAULT_SPREAD);
                s.refine_candidates(anchor.view(), n, spread, req.thumb_resolution)?
            }
        };
        let thumbnails = batch
            .thumbnails
            .iter()
            .map(|p| {
                let file = p.file_name().expect("thumbnail file").to_string_lossy();
                format!("/sessions/{sid}/thumbs/{}/{file}", batch.batch_id)
            })
            .collect();
        Ok(BatchView {
            batch_id: batch.batch_id,
            mode: batch.mode,
            seed: batch.seed,
            thumbnails,
        })
    })
    .await
    .map(Json)
}

async fn record_pair(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<PairRequest>,
) -> ApiResult<Json<PairRecord>> {
    with_session(&state, &id, move |s| {
        s.record_candidate(req.clip_id.as_deref(), req.batch_id, req.candidate_index)
    })
    .await
    .map(Json)
}

async fn thumbnail(
    State(state): State<AppState>,
    UrlPath((id, batch, file)): UrlPath<(String, usize, String)>,
) -> ApiResult<Response> {
    let path = with_session(&state, &id, move |s| {
        Ok(s.thumbnail(batch, &file)?.to_path_buf())
    })
    .await?;
    let bytes = tokio::fs::read(&path).await.map_err(AnnotateError::from)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn audio(
    State(state): State<AppState>,
    UrlPath((id, clip_id)): UrlPath<(String, String)>,
) -> ApiResult<Response> {
    let path = with_session(&state, &id, move |s| {
        s.clip(&clip_id)
            .map(|c| c.audio_path.clone())
            .ok_or_else(|| AnnotateError::InvalidRequest(format!("clip {clip_id:?} is not queued")))
    })
    .await?;
    if !path.is_file() {
        return Err(AnnotateError::Core(traum_core::Error::FileNotFound(path)).into());
    }
    let bytes = tokio::fs::read(&path).await.map_err(AnnotateError::from)?;
    let mime = match path.extension().and_then(|e| e.to_str()) {
        Some("wav") => "audio/wav",
        Some("mp3") => "audio/mpeg",
        Some("flac") => "audio/flac",
        Some("ogg") => "audio/ogg",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

async fn export(State(state): State<AppState>) -> ApiResult<Response> {
    let body = state.ctx.store.export()?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/clip", get(get_clip))
        .route("/sessions/{id}/skip", post(skip_clip))
        .route("/sessions/{id}/candidates", post(candidates))
        .route("/sessions/{id}/pair", post(record_pair))
        .route("/sessions/{id}/thumbs/{batch}/{file}", get(thumbnail))
        .route("/sessions/{id}/audio/{clip_id}", get(audio))
        .route("/dataset/export", get(export))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
