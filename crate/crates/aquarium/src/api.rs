//! HTTP routes over a [`TelemetryHub`].
//!
//! | route | |
//! |---|---|
//! | `GET /api/readings` | latest snapshot |
//! | `GET /api/events?since=&limit=&cursor=` | paged history |
//! | `POST /api/feed` `{"portions": n}` | manual feed |
//! | `POST /api/pump` `{"on": bool}` | pump toggle |
//! | `GET /api/health` | liveness |

use std::future::Future;

use aquarium_core::domain::{FeedResult, Timestamp};
use aquarium_core::telemetry::{ReadingsSnapshot, TelemetryError, TelemetryHub, COMMAND_TIMEOUT};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

pub const DEFAULT_PAGE: usize = 100;
pub const MAX_PAGE: usize = 1000;

/// Error body: `{"error": "<code>", "message": "..."}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error("invalid since timestamp {0:?}")]
    BadSince(String),
    #[error("request handler failed: {0}")]
    Internal(String),
}

impl ApiError {
    fn parts(&self) -> (StatusCode, &'static str) {
        use TelemetryError::*;
        match self {
            ApiError::Telemetry(ServiceStarting) => (StatusCode::SERVICE_UNAVAILABLE, "service_starting"),
            ApiError::Telemetry(ControlUnavailable) => (StatusCode::SERVICE_UNAVAILABLE, "control_unavailable"),
            ApiError::Telemetry(Timeout) => (StatusCode::GATEWAY_TIMEOUT, "timeout"),
            ApiError::Telemetry(InvalidPortions(_)) => (StatusCode::BAD_REQUEST, "invalid_portions"),
            ApiError::Telemetry(InvalidLimit) => (StatusCode::BAD_REQUEST, "invalid_limit"),
            ApiError::Telemetry(InvalidCursor(_)) => (StatusCode::BAD_REQUEST, "invalid_cursor"),
            ApiError::BadSince(_) => (StatusCode::BAD_REQUEST, "invalid_since"),
            ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = self.parts();
        let body = ErrorBody {
            error: code.to_string(),
            message: self.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct EventsQuery {
    pub since: Option<String>,
    pub limit: Option<i64>,
    pub cursor: Option<String>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FeedRequest {
    pub portions: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedResponse {
    pub accepted: bool,
    pub result: FeedResult,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PumpRequest {
    pub on: bool,
}

pub fn router(hub: TelemetryHub) -> Router {
    Router::new()
        .route("/api/readings", get(readings))
        .route("/api/events", get(events))
        .route("/api/feed", post(feed))
        .route("/api/pump", post(pump))
        .route("/api/health", get(health))
        .with_state(hub)
}

/// Serves `hub` on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    hub: TelemetryHub,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(hub)).with_graceful_shutdown(shutdown).await
}

async fn readings(State(hub): State<TelemetryHub>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(ReadingsSnapshot::clone(&*hub.get_readings()?)))
}

async fn events(State(hub): State<TelemetryHub>, Query(q): Query<EventsQuery>) -> Result<impl IntoResponse, ApiError> {
    let since = match q.since.as_deref() {
        None | Some("") => Timestamp::UNIX_EPOCH,
        Some(s) => s.parse().map_err(|_| ApiError::BadSince(s.to_string()))?,
    };
    let limit = match q.limit {
        None => DEFAULT_PAGE,
        Some(n) if n < 1 => return Err(TelemetryError::InvalidLimit.into()),
        Some(n) => (n as usize).min(MAX_PAGE),
    };
    Ok(Json(hub.get_events(since, limit, q.cursor.as_deref())?))
}

/// Commands block on the control loop's answer, so they wait off the async
/// workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, TelemetryError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(ApiError::from)
}

async fn feed(State(hub): State<TelemetryHub>, Json(req): Json<FeedRequest>) -> Result<impl IntoResponse, ApiError> {
    let result = blocking(move || hub.post_feed(req.portions, COMMAND_TIMEOUT)).await?;
    tracing::info!(portions = req.portions, outcome = ?result.outcome, "feed request");
    Ok(Json(FeedResponse {
        accepted: result.accepted(),
        result,
    }))
}

async fn pump(State(hub): State<TelemetryHub>, Json(req): Json<PumpRequest>) -> Result<impl IntoResponse, ApiError> {
    let state = blocking(move || hub.post_pump(req.on, COMMAND_TIMEOUT)).await?;
    tracing::info!(on = state.on, "pump request");
    Ok(Json(state))
}

async fn health(State(hub): State<TelemetryHub>) -> impl IntoResponse {
    Json(hub.health())
}
