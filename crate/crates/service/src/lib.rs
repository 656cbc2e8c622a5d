//! HTTP API through which annotators answer the pending queries of a session.
//!
//! | method | path                  | purpose                                   |
//! |--------|-----------------------|-------------------------------------------|
//! | GET    | `/api/session`        | manifest, pool size and open-round status |
//! | GET    | `/api/queries`        | queries of the open round with crops      |
//! | POST   | `/api/labels`         | answer one query                          |
//! | POST   | `/api/rounds/advance` | commit the answers and close the round    |
//! | GET    | `/api/images/{id}`    | the full image as PNG                     |

use std::io::Cursor;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use image::{ImageFormat, RgbImage};
use madbal_core::round::{complete_round, load_image, open_round, record_answer, RoundReport};
use madbal_core::{Error, Session, SessionManifest};
use serde::{Deserialize, Serialize};
use tokio::sync::RwLock;
use tower_http::cors::CorsLayer;

pub const DEFAULT_PORT: u16 = 8787;

type Shared = Arc<RwLock<Session>>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownQuery(_) | Error::NoOpenRound => StatusCode::NOT_FOUND,
            Error::AlreadyAnswered(_) | Error::PendingLabels { .. } | Error::DuplicateLabel { .. } => {
                StatusCode::CONFLICT
            }
            Error::ClassOutOfRange { .. } | Error::InvalidArgument(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryStatus {
    Open,
    Answered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingQuery {
    pub query_id: usize,
    pub image_id: String,
    pub row: usize,
    pub col: usize,
    pub status: QueryStatus,
    /// The submitted class, once answered.
    pub class_id: Option<usize>,
    /// Square crop centered on the pixel, edge-clamped, as base64 PNG.
    pub neighborhood: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStatusView {
    pub round: u32,
    pub open: bool,
    pub total: usize,
    pub answered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub manifest: SessionManifest,
    pub pool_size: usize,
    pub round: RoundStatusView,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub query_id: usize,
    pub class_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAccepted {
    pub query_id: usize,
    pub class_id: usize,
    pub remaining: usize,
}

#[derive(Debug, Default, Deserialize)]
struct QueryFilter {
    status: Option<QueryStatus>,
}

/// `size x size` window centered on `(row, col)`, replicating edge pixels.
pub fn crop(image: &RgbImage, row: usize, col: usize, size: usize) -> RgbImage {
    let (w, h) = (image.width() as isize, image.height() as isize);
    let half = (size / 2) as isize;
    RgbImage::from_fn(size as u32, size as u32, |x, y| {
        let sx = (col as isize - half + x as isize).clamp(0, w - 1);
        let sy = (row as isize - half + y as isize).clamp(0, h - 1);
        *image.get_pixel(sx as u32, sy as u32)
    })
}

fn png_bytes(image: &RgbImage) -> ApiResult<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    image
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(out.into_inner())
}

async fn get_session(State(state): State<Shared>) -> ApiResult<Json<SessionView>> {
    let session = state.read().await;
    let open = open_round(&session)?;
    let round = RoundStatusView {
        round: session.next_round(),
        open: open.is_some(),
        total: open.as_ref().map_or(0, |o| o.queries.queries.len()),
        answered: open.as_ref().map_or(0, |o| o.answers.answers.len()),
    };
    Ok(Json(SessionView { manifest: session.manifest.clone(), pool_size: session.pool_size(), round }))
}

async fn get_queries(
    State(state): State<Shared>,
    Query(filter): Query<QueryFilter>,
) -> ApiResult<Json<Vec<PendingQuery>>> {
    let session = state.read().await;
    let Some(open) = open_round(&session)? else {
        return Ok(Json(Vec::new()));
    };
    let size = session.manifest.config.crop_size;
    let engine = base64::engine::general_purpose::STANDARD;
    let mut images: std::collections::HashMap<String, RgbImage> = Default::default();
    let mut out = Vec::new();
    for (query_id, q) in open.queries.queries.iter().enumerate() {
        let class_id = open.answers.answers.get(&query_id).copied();
        let status = if class_id.is_some() { QueryStatus::Answered } else { QueryStatus::Open };
        if filter.status.is_some_and(|s| s != status) {
            continue;
        }
        if !images.contains_key(&q.image_id) {
            images.insert(q.image_id.clone(), load_image(&session, &q.image_id)?);
        }
        let patch = crop(&images[&q.image_id], q.row, q.col, size);
        out.push(PendingQuery {
            query_id,
            image_id: q.image_id.clone(),
            row: q.row,
            col: q.col,
            status,
            class_id,
            neighborhood: engine.encode(png_bytes(&patch)?),
        });
    }
    Ok(Json(out))
}

async fn post_label(
    State(state): State<Shared>,
    Json(body): Json<LabelSubmission>,
) -> ApiResult<Json<LabelAccepted>> {
    let session = state.write().await;
    record_answer(&session, body.query_id, body.class_id)?;
    let remaining = open_round(&session)?.map_or(0, |o| o.remaining());
    Ok(Json(LabelAccepted { query_id: body.query_id, class_id: body.class_id, remaining }))
}

async fn advance(State(state): State<Shared>) -> ApiResult<Json<RoundReport>> {
    let mut session = state.write().await;
    let report = complete_round(&mut session)?;
    log::info!("round {} closed, pool size {}", report.round, report.pool_size_after);
    Ok(Json(report))
}

async fn get_image(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = state.read().await;
    if session.image_index(&id).is_none() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown image {id:?}")));
    }
    let bytes = png_bytes(&load_image(&session, &id)?)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

pub fn router(session: Session) -> Router {
    Router::new()
        .route("/api/session", get(get_session))
        .route("/api/queries", get(get_queries))
        .route("/api/labels", post(post_label))
        .route("/api/rounds/advance", post(advance))
        .route("/api/images/{id}", get(get_image))
        .layer(CorsLayer::permissive())
        .with_state(Arc::new(RwLock::new(session)))
}

/// Serves `session` on `0.0.0.0:port` until the process is stopped.
pub async fn serve(session: Session, port: u16) -> std::io::Result<()> {
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(session)).await
}

/// Blocking wrapper around [`serve`] with its own multi-threaded runtime.
pub fn serve_blocking(session: Session, port: u16) -> std::io::Result<()> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()?.block_on(serve(session, port))
}
