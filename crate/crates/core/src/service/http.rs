//! JSON-over-HTTP front end for [`Engine`].

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::engine::{Engine, EngineError};
use super::session::{CaptureKind, EventRecord, SessionError};
use crate::vitals::{read_vitals_csv, VitalsSample};

/// Longest a client may ask an events request to wait.
pub const MAX_WAIT_MS: u64 = 30_000;
const MAX_BODY: usize = 32 << 20;

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code: "malformed",
            message: message.into(),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let (status, code) = match &e {
            EngineError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            EngineError::Session(SessionError::Conflict(_)) => (StatusCode::CONFLICT, "tier_order"),
            EngineError::Session(SessionError::Invalid(_)) | EngineError::BadSample { .. } => {
                (StatusCode::BAD_REQUEST, "invalid_sample")
            }
            EngineError::Decode { .. } => (StatusCode::BAD_REQUEST, "undecodable"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self {
            status,
            code,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs blocking engine work (detectors, disk) off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, EngineError> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: e.to_string(),
        }),
    }
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/vitals", post(post_vitals))
        .route("/v1/sessions/{id}/capture/{modality}", post(post_capture))
        .route("/v1/sessions/{id}/diagnosis", get(get_diagnosis))
        .route("/v1/sessions/{id}/diagnose", post(post_diagnose))
        .route("/v1/sessions/{id}/clear", post(post_clear))
        .route("/v1/sessions/{id}/events", get(get_events))
        .layer(DefaultBodyLimit::max(MAX_BODY))
        .with_state(engine)
}

async fn create_session(State(engine): State<Arc<Engine>>) -> ApiResult<impl IntoResponse> {
    let view = blocking(move || engine.create_session()).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(engine): State<Arc<Engine>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(engine.view(&id)?))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(VitalsSample),
    Many(Vec<VitalsSample>),
}

fn parse_vitals(headers: &HeaderMap, body: &[u8]) -> ApiResult<Vec<VitalsSample>> {
    let ctype = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("application/json");
    if ctype.starts_with("text/csv") {
        return read_vitals_csv(body).map_err(|e| ApiError::bad_request(e.to_string()));
    }
    match serde_json::from_slice(body) {
        Ok(OneOrMany::One(s)) => Ok(vec![s]),
        Ok(OneOrMany::Many(v)) => Ok(v),
        Err(e) => Err(ApiError::bad_request(format!("vitals body: {e}"))),
    }
}

async fn post_vitals(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let samples = parse_vitals(&headers, &body)?;
    if samples.is_empty() {
        return Err(ApiError::bad_request("no samples in body"));
    }
    let out = blocking(move || engine.ingest_vitals(&id, &samples)).await?;
    Ok(Json(out))
}

async fn post_capture(
    State(engine): State<Arc<Engine>>,
    Path((id, modality)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let kind = CaptureKind::parse(&modality)
        .ok_or_else(|| ApiError::bad_request(format!("unknown capture modality {modality:?}")))?;
    let out = blocking(move || engine.submit_capture(&id, kind, &body)).await?;
    Ok(Json(out))
}

async fn get_diagnosis(State(engine): State<Arc<Engine>>, Path(id): Path<String>) -> ApiResult<Response> {
    match engine.diagnosis(&id)? {
        Some(d) => Ok(Json(d).into_response()),
        None => Err(ApiError {
            status: StatusCode::CONFLICT,
            code: "not_diagnosed",
            message: format!("session is {:?}; no diagnosis yet", engine.state(&id)?),
        }),
    }
}

async fn post_diagnose(State(engine): State<Arc<Engine>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || engine.diagnose(&id)).await?))
}

async fn post_clear(State(engine): State<Arc<Engine>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || engine.clear(&id)).await?))
}

#[derive(Debug, Deserialize)]
pub struct EventsQuery {
    /// Return records with a sequence strictly greater than this.
    pub since: Option<u64>,
    /// Wait up to this long for a new record when none is available.
    pub wait_ms: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EventsPage {
    pub session_id: String,
    pub events: Vec<EventRecord>,
    /// Pass as `since` on the next request.
    pub last_sequence: Option<u64>,
}

async fn get_events(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
) -> ApiResult<impl IntoResponse> {
    let mut rx = engine.subscribe(&id)?;
    let mut events = engine.events_after(&id, q.since)?;
    let wait = q.wait_ms.unwrap_or(0).min(MAX_WAIT_MS);
    if events.is_empty() && wait > 0 {
        let deadline = tokio::time::Instant::now() + Duration::from_millis(wait);
        while events.is_empty() {
            match tokio::time::timeout_at(deadline, rx.changed()).await {
                Ok(Ok(())) => events = engine.events_after(&id, q.since)?,
                _ => break,
            }
        }
    }
    let last_sequence = events.last().map(|r| r.sequence).or(q.since);
    Ok(Json(EventsPage {
        session_id: id,
        events,
        last_sequence,
    }))
}
