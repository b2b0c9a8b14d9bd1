//! HTTP service that runs rating questionnaires over a trajectory dataset.
//!
//! | method | path | success | errors |
//! |---|---|---|---|
//! | POST | `/api/session` | 201 `{session_id, next}` | 400, 503 |
//! | GET | `/api/session/{id}/next` | 200 playback bundle | 404, 410 |
//! | POST | `/api/session/{id}/score` | 200 `{progress, complete}` | 400, 404, 409 |
//! | GET | `/api/admin/export` | 200 summary | 401 |
//!
//! Everything else is served from the configured static directory.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};
use tower_http::services::{ServeDir, ServeFile};

pub mod assign;
pub mod config;
pub mod service;
pub mod session;

pub use config::{ContextPool, ControlItem, SurveyConfig};
pub use service::{system_clock, Clock, Survey, SurveyError};
pub use session::{Demographics, SessionState, SurveySession};

impl IntoResponse for SurveyError {
    fn into_response(self) -> Response {
        let status = match &self {
            SurveyError::Config(_) | SurveyError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            SurveyError::BadRequest(_) => StatusCode::BAD_REQUEST,
            SurveyError::NotFound => StatusCode::NOT_FOUND,
            SurveyError::Gone => StatusCode::GONE,
            SurveyError::Conflict => StatusCode::CONFLICT,
            SurveyError::PoolExhausted => StatusCode::SERVICE_UNAVAILABLE,
            SurveyError::Unauthorized => StatusCode::UNAUTHORIZED,
        };
        (status, Json(json!({"error": self.to_string()}))).into_response()
    }
}

fn parse_body(body: &Bytes) -> Result<Value, SurveyError> {
    serde_json::from_slice(body).map_err(|e| SurveyError::BadRequest(format!("invalid JSON: {e}")))
}

async fn create_session(State(s): State<Arc<Survey>>, body: Bytes) -> Result<Response, SurveyError> {
    let demographics = Demographics::from_json(&parse_body(&body)?).map_err(SurveyError::BadRequest)?;
    let (id, next) = s.create(demographics).await?;
    Ok((StatusCode::CREATED, Json(json!({"session_id": id, "next": next}))).into_response())
}

async fn next_item(State(s): State<Arc<Survey>>, Path(id): Path<String>) -> Result<Json<Value>, SurveyError> {
    s.next(&id).await.map(Json)
}

async fn post_score(State(s): State<Arc<Survey>>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, SurveyError> {
    let v = parse_body(&body)?;
    let score = v.get("score").and_then(Value::as_f64).ok_or_else(|| SurveyError::BadRequest("score must be a number".into()))?;
    let item = match v.get("item") {
        None | Some(Value::Null) => None,
        Some(i) => Some(i.as_u64().ok_or_else(|| SurveyError::BadRequest("item must be an index".into()))? as usize),
    };
    s.score(&id, score, item).await.map(Json)
}

async fn admin_export(State(s): State<Arc<Survey>>, headers: HeaderMap) -> Result<Json<Value>, SurveyError> {
    s.authorize(headers.get(header::AUTHORIZATION).and_then(|h| h.to_str().ok()))?;
    Ok(Json(s.export().await))
}

pub fn router(survey: Arc<Survey>) -> Router {
    let api = Router::new()
        .route("/api/session", post(create_session))
        .route("/api/session/{id}/next", get(next_item))
        .route("/api/session/{id}/score", post(post_score))
        .route("/api/admin/export", get(admin_export));
    let app = match &survey.config().static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(dir.join("index.html")))),
        None => api,
    };
    app.with_state(survey)
}

/// Serves until the listener fails, expiring idle sessions once a minute.
pub async fn serve(survey: Arc<Survey>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    let sweeper = survey.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            sweeper.expire_stale().await;
        }
    });
    axum::serve(listener, router(survey)).await
}
