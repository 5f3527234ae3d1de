//! `/api/v1` routes.

use std::collections::BTreeSet;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pal_core::oracles::{AnswerSet, Responder};
use pal_core::PalError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use crate::session::{Lifecycle, Session, Shared, API_VERSION};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn no_run() -> Self {
        Self::new(StatusCode::NOT_FOUND, "no_active_run", "no run is active")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "version": API_VERSION,
            "error": { "code": self.code, "message": self.message },
        });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult = std::result::Result<Json<Value>, ApiError>;

fn versioned<T: Serialize>(value: T) -> Json<Value> {
    let mut v = serde_json::to_value(value).expect("payloads serialize");
    if let Value::Object(m) = &mut v {
        m.insert("version".into(), API_VERSION.into());
    }
    Json(v)
}

fn with_session<T>(shared: &Shared, f: impl FnOnce(&Session) -> std::result::Result<T, ApiError>) -> std::result::Result<T, ApiError> {
    match shared.read().as_ref() {
        Some(s) => f(s),
        None => Err(ApiError::no_run()),
    }
}

async fn session(State(shared): State<Shared>) -> ApiResult {
    with_session(&shared, |s| {
        let final_metrics = match s.lifecycle {
            Lifecycle::Done => s.progress.latest,
            _ => None,
        };
        Ok(versioned(json!({
            "run_id": s.run_id,
            "lifecycle": s.lifecycle,
            "n": s.n,
            "classes": s.classes,
            "batch": s.batch,
            "progress": s.progress,
            "final_metrics": final_metrics,
            "error": s.error,
        })))
    })
}

async fn next_query(State(shared): State<Shared>) -> ApiResult {
    with_session(&shared, |s| match s.lifecycle {
        Lifecycle::Done => Err(ApiError::new(StatusCode::GONE, "done", "the run has finished")),
        Lifecycle::Solving => Err(ApiError::new(StatusCode::CONFLICT, "solving", "the run is solving; retry shortly")),
        Lifecycle::AwaitingAnswers => match &s.batch {
            Some(b) => Ok(versioned(b)),
            None => Err(ApiError::new(StatusCode::CONFLICT, "solving", "no batch is open")),
        },
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    #[serde(default)]
    pub version: Option<u32>,
    pub batch_id: u64,
    /// Candidate indices marked positive.
    pub selections: Vec<usize>,
}

async fn answers(State(shared): State<Shared>, body: std::result::Result<Json<AnswerRequest>, JsonRejection>) -> ApiResult {
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "malformed", e.body_text()))?;
    if req.version.is_some_and(|v| v != API_VERSION) {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "version",
            format!("unsupported version; expected {API_VERSION}"),
        ));
    }
    let mut guard = shared.write();
    let s = guard.as_mut().ok_or_else(ApiError::no_run)?;
    let open = match s.open_batch() {
        Some(b) if b.batch_id == req.batch_id => b,
        other => {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "stale_batch",
                match other {
                    Some(b) => format!("batch {} is not open; the open batch is {}", req.batch_id, b.batch_id),
                    None => format!("batch {} is not open", req.batch_id),
                },
            ))
        }
    };
    let len = open.candidates.len();
    let mut seen = BTreeSet::new();
    for &k in &req.selections {
        if k >= len {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "bad_selection",
                format!("selection {k} is outside 0..{len}"),
            ));
        }
        if !seen.insert(k) {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "bad_selection",
                format!("selection {k} appears twice"),
            ));
        }
    }
    let answers = AnswerSet {
        batch_id: req.batch_id,
        answers: (0..len).map(|k| seen.contains(&k)).collect(),
        responder: Responder::Human,
    };
    match shared.queue.submit(answers) {
        Ok(()) => {}
        Err(PalError::StaleBatch { .. }) => {
            return Err(ApiError::new(StatusCode::CONFLICT, "stale_batch", "batch already answered"));
        }
        Err(e) => return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "rejected", e.to_string())),
    }
    s.lifecycle = Lifecycle::Solving;
    Ok(versioned(json!({
        "accepted": true,
        "batch_id": req.batch_id,
        "positives": seen.len(),
    })))
}

async fn embedding(State(shared): State<Shared>) -> ApiResult {
    with_session(&shared, |s| match &s.embedding {
        Some(e) => Ok(versioned(e)),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "not_solved", "no solve has completed yet")),
    })
}

async fn manifest(State(shared): State<Shared>) -> ApiResult {
    with_session(&shared, |s| match &s.manifest {
        Some(m) => Ok(Json(serde_json::to_value(m).expect("manifest serializes"))),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "not_done", "the run has not finished")),
    })
}

/// Routes over `shared`, with CORS opened to `cors_origin` when given.
pub fn router(shared: Shared, cors_origin: Option<HeaderValue>) -> Router {
    let api = Router::new()
        .route("/session", get(session))
        .route("/queries/next", get(next_query))
        .route("/answers", post(answers))
        .route("/embedding", get(embedding))
        .route("/manifest", get(manifest));
    let app = Router::new().nest("/api/v1", api).with_state(shared);
    match cors_origin {
        Some(origin) => app.layer(
            CorsLayer::new()
                .allow_origin(origin)
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([axum::http::header::CONTENT_TYPE]),
        ),
        None => app,
    }
}
