//! JSON API under `/api`. Handlers validate input, call one engine or store
//! operation on the blocking pool and map errors to `{code, message}`.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, NaiveDate, NaiveTime, Utc};
use serde::Serialize;
use serde_json::{json, Value};
use snowwatch_core::geo::BoundingBox;
use snowwatch_core::ingestion::{ExifMeta, MediaKind, Sidecar, StateKind};
use snowwatch_core::store::{MediaQuery, StoreError, DEFAULT_PAGE_LIMIT};

use crate::engine::{Correction, Engine, EngineError};
use crate::runtime::JobQueue;

pub const MAX_UPLOAD_BYTES: usize = 64 * 1024 * 1024;
pub const DEFAULT_HEATMAP_CELL_DEG: f64 = 0.01;

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub queue: JobQueue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }
    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
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
        (self.status, Json(json!({"code": self.code, "message": self.message}))).into_response()
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let msg = e.to_string();
        match e {
            EngineError::NotFound(_) => ApiError::not_found(msg),
            EngineError::NotAligned(_) => ApiError::new(StatusCode::CONFLICT, "not_aligned", msg),
            EngineError::InvalidPose(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "pose_invalid", msg),
            EngineError::InvalidWarp(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "warp_invalid", msg),
            EngineError::Invalid(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", msg),
            EngineError::Store(s) => s.into(),
            _ => ApiError::internal(msg),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::NotFound(_) => ApiError::not_found(msg),
            StoreError::InvalidQuery(_) => ApiError::bad_request(msg),
            StoreError::Conflict { .. } | StoreError::InvalidTransition { .. } => {
                ApiError::new(StatusCode::CONFLICT, "state_conflict", msg)
            }
            _ => ApiError::internal(msg),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs blocking engine work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(format!("task failed: {e}")))?
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/photos", post(upload_photo))
        .route("/api/media", get(list_media))
        .route("/api/media/:id", get(get_media))
        .route("/api/media/:id/image", get(get_image))
        .route("/api/media/:id/mask.png", get(get_mask))
        .route("/api/media/:id/alignment", get(get_alignment).put(put_alignment))
        .route("/api/heatmap", get(heatmap))
        .route("/api/webcams", get(list_webcams))
        .route("/api/webcams/:id/frames", get(webcam_frames))
        .route("/api/snowindex", get(snow_index_series))
        .route("/api/peaks", get(peaks))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

// ---- query parsing -----------------------------------------------------------

type Params = HashMap<String, String>;

fn param<'a>(p: &'a Params, key: &str) -> Option<&'a str> {
    p.get(key).map(String::as_str).filter(|v| !v.is_empty())
}

fn parse_num<T: std::str::FromStr>(p: &Params, key: &str) -> ApiResult<Option<T>> {
    param(p, key)
        .map(|v| v.parse::<T>().map_err(|_| ApiError::bad_request(format!("{key}: cannot parse {v:?}"))))
        .transpose()
}

/// RFC 3339 timestamp, or a bare date meaning the start (or end) of that
/// UTC day.
fn parse_time(p: &Params, key: &str, end_of_day: bool) -> ApiResult<Option<DateTime<Utc>>> {
    let Some(v) = param(p, key) else { return Ok(None) };
    if let Ok(t) = DateTime::parse_from_rfc3339(v) {
        return Ok(Some(t.with_timezone(&Utc)));
    }
    let d = NaiveDate::parse_from_str(v, "%Y-%m-%d")
        .map_err(|_| ApiError::bad_request(format!("{key}: expected RFC 3339 time or YYYY-MM-DD, got {v:?}")))?;
    let t = if end_of_day { NaiveTime::from_hms_milli_opt(23, 59, 59, 999) } else { Some(NaiveTime::MIN) };
    Ok(Some(d.and_time(t.expect("valid time")).and_utc()))
}

fn parse_bbox(p: &Params) -> ApiResult<Option<BoundingBox>> {
    param(p, "bbox")
        .map(|v| {
            BoundingBox::parse(v)
                .map_err(|e| ApiError::bad_request(format!("bbox (lat_min,lon_min,lat_max,lon_max): {e}")))
        })
        .transpose()
}

fn parse_kind(v: &str) -> ApiResult<MediaKind> {
    match v.to_ascii_uppercase().as_str() {
        "PHOTO" => Ok(MediaKind::Photo),
        "WEBCAM" | "WEBCAM_FRAME" => Ok(MediaKind::WebcamFrame),
        _ => Err(ApiError::bad_request(format!("kind: expected PHOTO or WEBCAM_FRAME, got {v:?}"))),
    }
}

pub fn parse_media_query(p: &Params) -> ApiResult<MediaQuery> {
    let q = MediaQuery {
        kind: param(p, "kind").map(parse_kind).transpose()?,
        bbox: parse_bbox(p)?,
        min_alt: parse_num(p, "min_alt")?,
        from: parse_time(p, "from", false)?,
        to: parse_time(p, "to", true)?,
        peak: param(p, "peak").map(str::to_string),
        state: param(p, "state")
            .map(|s| StateKind::parse(s).ok_or_else(|| ApiError::bad_request(format!("state: unknown {s:?}"))))
            .transpose()?,
        webcam_id: param(p, "webcam_id").map(str::to_string),
        offset: parse_num(p, "offset")?.unwrap_or(0),
        limit: parse_num(p, "limit")?.unwrap_or(DEFAULT_PAGE_LIMIT),
    };
    q.validate()?;
    Ok(q)
}

// ---- handlers ------------------------------------------------------------------

#[derive(Serialize)]
struct UploadResponse {
    id: String,
    state: StateKind,
    /// Metadata as parsed from the upload, for client-side preview.
    exif: ExifMeta,
    duplicate: bool,
}

async fn upload_photo(State(st): State<AppState>, mut form: Multipart) -> ApiResult<Response> {
    let mut image: Option<(Bytes, String)> = None;
    let mut sidecar: Option<Sidecar> = None;
    while let Some(field) = form.next_field().await.map_err(|e| ApiError::bad_request(e.to_string()))? {
        match field.name() {
            Some("image") => {
                let ext = field
                    .file_name()
                    .and_then(|n| std::path::Path::new(n).extension())
                    .and_then(|e| e.to_str())
                    .map(|e| e.to_ascii_lowercase())
                    .filter(|e| snowwatch_core::ingestion::IMAGE_EXTENSIONS.contains(&e.as_str()))
                    .unwrap_or_else(|| "jpg".into());
                let bytes = field.bytes().await.map_err(|e| ApiError::bad_request(e.to_string()))?;
                image = Some((bytes, ext));
            }
            Some("sidecar") => {
                let bytes = field.bytes().await.map_err(|e| ApiError::bad_request(e.to_string()))?;
                let s = Sidecar::parse(&bytes).map_err(|e| ApiError::bad_request(format!("sidecar: {e}")))?;
                sidecar = Some(s);
            }
            _ => {}
        }
    }
    let (bytes, ext) = image.ok_or_else(|| ApiError::bad_request("multipart field \"image\" is required"))?;
    if bytes.is_empty() {
        return Err(ApiError::bad_request("empty image"));
    }
    let engine = st.engine.clone();
    let out = blocking(move || Ok(engine.upload(&bytes, &ext, sidecar.as_ref())?)).await?;
    if out.created {
        st.queue.enqueue(out.item.id.clone());
    }
    let status = if out.created { StatusCode::CREATED } else { StatusCode::OK };
    let body = UploadResponse {
        id: out.item.id.clone(),
        state: out.item.state.kind(),
        exif: out.item.exif.clone(),
        duplicate: !out.created,
    };
    Ok((status, Json(body)).into_response())
}

async fn list_media(State(st): State<AppState>, Query(p): Query<Params>) -> ApiResult<Json<Value>> {
    let q = parse_media_query(&p)?;
    let page = st.engine.store().query(&q)?;
    Ok(Json(json!({"items": page.items, "total": page.total})))
}

async fn get_media(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let item = st.engine.store().get_item(&id).ok_or_else(|| ApiError::not_found(format!("unknown media id {id}")))?;
    Ok(Json(serde_json::to_value(item).map_err(|e| ApiError::internal(e.to_string()))?))
}

fn content_type(name: &str) -> &'static str {
    match std::path::Path::new(name).extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        _ => "application/octet-stream",
    }
}

async fn get_image(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let engine = st.engine.clone();
    blocking(move || {
        let store = engine.store();
        let item = store.get_item(&id).ok_or_else(|| ApiError::not_found(format!("unknown media id {id}")))?;
        let bytes = store.read_payload(&item)?;
        Ok(([(header::CONTENT_TYPE, content_type(&item.payload))], bytes).into_response())
    })
    .await
}

async fn get_mask(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let engine = st.engine.clone();
    blocking(move || {
        let store = engine.store();
        let item = store.get_item(&id).ok_or_else(|| ApiError::not_found(format!("unknown media id {id}")))?;
        if item.state.kind() != StateKind::Masked {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "mask_not_ready",
                format!("item is {}, mask exists once MASKED", item.state.kind()),
            ));
        }
        let bytes = std::fs::read(store.mask_path(&id)).map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
    })
    .await
}

async fn get_alignment(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let engine = st.engine.clone();
    let view = blocking(move || Ok(engine.alignment_view(&id)?)).await?;
    Ok(Json(serde_json::to_value(view).map_err(|e| ApiError::internal(e.to_string()))?))
}

async fn put_alignment(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let correction: Correction = serde_json::from_slice(&body).map_err(|e| {
        ApiError::bad_request(format!("expected {{\"pose\":{{yaw,pitch,hfov}}}} or {{\"warp\":{{points}}}}: {e}"))
    })?;
    let engine = st.engine.clone();
    let out = blocking(move || Ok(engine.submit_manual_alignment(&id, &correction)?)).await?;
    Ok(Json(serde_json::to_value(out).map_err(|e| ApiError::internal(e.to_string()))?))
}

async fn heatmap(State(st): State<AppState>, Query(p): Query<Params>) -> ApiResult<Json<Value>> {
    let mut q = parse_media_query(&p)?;
    q.offset = 0;
    let cell = parse_num(&p, "cell")?.unwrap_or(DEFAULT_HEATMAP_CELL_DEG);
    let h = st.engine.store().heatmap(&q, cell)?;
    Ok(Json(json!({"cell": h.cell_deg, "origin": h.origin, "cells": h.cells})))
}

async fn list_webcams(State(st): State<AppState>) -> Json<Value> {
    let snap = st.engine.store().snapshot();
    let cams: Vec<Value> = st
        .engine
        .config()
        .webcams
        .iter()
        .map(|c| {
            let frames = snap.items().filter(|i| i.webcam_id.as_deref() == Some(c.id.as_str()));
            let (count, latest) = frames.fold((0usize, None::<DateTime<Utc>>), |(n, l), i| {
                (n + 1, Some(l.map_or(i.taken_at, |l| l.max(i.taken_at))))
            });
            json!({
                "id": c.id,
                "viewpoint": c.viewpoint,
                "pose": c.pose,
                "region": c.region_name(),
                "poll_interval_s": c.poll_interval_s,
                "frame_count": count,
                "latest_frame_at": latest,
            })
        })
        .collect();
    Json(json!({"webcams": cams}))
}

async fn webcam_frames(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(p): Query<Params>,
) -> ApiResult<Json<Value>> {
    if st.engine.config().webcam(&id).is_none() {
        return Err(ApiError::not_found(format!("unknown webcam {id}")));
    }
    let date = param(&p, "date")
        .map(|d| {
            NaiveDate::parse_from_str(d, "%Y-%m-%d")
                .map_err(|_| ApiError::bad_request(format!("date: expected YYYY-MM-DD, got {d:?}")))
        })
        .transpose()?;
    let frames: Vec<Value> = st
        .engine
        .webcam_frames(&id, date)
        .into_iter()
        .map(|f| {
            json!({
                "id": f.id,
                "taken_at": f.taken_at,
                "state": f.state.kind(),
                "visibility": f.weather.map(|w| w.visibility),
                "usable": f.weather.map(|w| w.usable),
                "snow_index": f.snow_index.and_then(|s| s.snow_index),
            })
        })
        .collect();
    Ok(Json(json!({"webcam_id": id, "date": date, "frames": frames})))
}

async fn snow_index_series(State(st): State<AppState>, Query(p): Query<Params>) -> ApiResult<Json<Value>> {
    let (from, to) = (parse_time(&p, "from", false)?, parse_time(&p, "to", true)?);
    if let (Some(a), Some(b)) = (from, to) {
        if a > b {
            return Err(ApiError::bad_request("from is after to"));
        }
    }
    let series = st.engine.store().snow_series(param(&p, "region"), from, to);
    Ok(Json(json!({"series": series})))
}

async fn peaks(State(st): State<AppState>, Query(p): Query<Params>) -> ApiResult<Json<Value>> {
    let bbox = parse_bbox(&p)?;
    let peaks: Vec<_> =
        st.engine.peaks().iter().filter(|pk| bbox.is_none_or(|b| b.contains(&pk.position()))).cloned().collect();
    Ok(Json(json!({"peaks": peaks})))
}
