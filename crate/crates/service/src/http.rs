//! HTTP surface of the annotation service.
//!
//! | method | path | body |
//! |--------|------|------|
//! | GET  | `/api/tasks/next?worker=ID` | `IssuedTask`, or 204 when nothing is available |
//! | POST | `/api/assignments/{id}/steps` | `StepJudgment` -> `StepAck` |
//! | POST | `/api/assignments/{id}/final` | `FinalAnswers` -> `FinalAck` |
//! | GET  | `/api/export` | responses as newline-delimited JSON |
//! | GET  | `/healthz` | `ok` |

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use souschef_core::tasks::{FinalAnswers, StepJudgment};
use tower_http::services::ServeDir;

use crate::service::{Service, ServiceError};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self {
            ServiceError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ServiceError::UnknownAssignment(_) => (StatusCode::NOT_FOUND, "unknown_assignment"),
            ServiceError::Expired(_) => (StatusCode::GONE, "expired"),
            ServiceError::AlreadySubmitted(_) => (StatusCode::CONFLICT, "already_submitted"),
            ServiceError::Ordering { .. } => (StatusCode::CONFLICT, "ordering"),
            ServiceError::Incomplete { .. } => (StatusCode::CONFLICT, "incomplete"),
            ServiceError::Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
            ServiceError::Io(_) | ServiceError::Replay(_) | ServiceError::DuplicateTask(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        let violations = match &self {
            ServiceError::Validation(v) => serde_json::to_value(v).unwrap_or_default(),
            _ => json!([]),
        };
        if status.is_server_error() {
            log::error!("{self}");
        }
        let body = json!({
            "error": kind,
            "message": self.to_string(),
            "violations": violations,
        });
        (status, Json(body)).into_response()
    }
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    #[serde(default)]
    worker: String,
}

async fn next_task(State(svc): State<Arc<Service>>, Query(q): Query<NextQuery>) -> Result<Response, ServiceError> {
    Ok(match svc.next_task(&q.worker)? {
        Some(issued) => Json(issued).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn submit_step(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    Json(judgment): Json<StepJudgment>,
) -> Result<Response, ServiceError> {
    Ok(Json(svc.submit_step(&id, judgment)?).into_response())
}

async fn submit_final(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    Json(answers): Json<FinalAnswers>,
) -> Result<Response, ServiceError> {
    Ok(Json(svc.submit_final(&id, answers)?).into_response())
}

async fn export(State(svc): State<Arc<Service>>) -> Result<Response, ServiceError> {
    let mut body = String::new();
    for response in svc.export_responses() {
        body.push_str(&serde_json::to_string(&response).map_err(std::io::Error::from)?);
        body.push('\n');
    }
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn healthz() -> &'static str {
    "ok"
}

pub fn router(service: Arc<Service>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/assignments/{id}/steps", post(submit_step))
        .route("/api/assignments/{id}/final", post(submit_final))
        .route("/api/export", get(export))
        .route("/healthz", get(healthz))
        .with_state(service);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    service: Arc<Service>,
    addr: SocketAddr,
    static_dir: Option<PathBuf>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service, static_dir))
        .with_graceful_shutdown(shutdown)
        .await
}
