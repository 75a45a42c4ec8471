//! HTTP control API. Handlers only read the published view or enqueue
//! commands; the engine applies them between generations.

use std::time::Duration;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use qevo_core::corpus::Label;
use qevo_core::orchestrator::{Ack, ControlError, Controller};
use qevo_core::query::QueryError;

/// How long pause and resume wait for the engine to reach a generation
/// boundary before answering 202 instead of 200.
const ACK_WAIT: Duration = Duration::from_secs(5);

const DEFAULT_TOP: usize = 20;

pub fn router(ctl: Controller) -> Router {
    Router::new()
        .route("/status", get(status))
        .route("/population", get(population))
        .route("/history", get(history))
        .route("/pause", post(pause))
        .route("/resume", post(resume))
        .route("/stop", post(stop))
        .route("/inject", post(inject))
        .route("/labels/pending", get(pending_labels))
        .route("/labels", post(label))
        .with_state(ctl)
}

struct ApiError(ControlError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let code = match &self.0 {
            ControlError::Parse { .. } | ControlError::TooLong { .. } | ControlError::Empty | ControlError::BadLabel => {
                StatusCode::BAD_REQUEST
            }
            ControlError::Stopped | ControlError::Disconnected => StatusCode::CONFLICT,
            ControlError::UnknownDocument(_) => StatusCode::NOT_FOUND,
        };
        let mut body = json!({ "error": self.0.to_string() });
        if let ControlError::Parse { index, query, error } = &self.0 {
            body["index"] = json!(index);
            body["query"] = json!(query);
            if let QueryError::Syntax { offset, .. } = error {
                body["offset"] = json!(offset);
            }
        }
        (code, Json(body)).into_response()
    }
}

impl From<ControlError> for ApiError {
    fn from(e: ControlError) -> Self {
        ApiError(e)
    }
}

async fn status(State(ctl): State<Controller>) -> Response {
    match ctl.snapshot() {
        Some(s) => Json(s).into_response(),
        None => (StatusCode::SERVICE_UNAVAILABLE, Json(json!({ "error": "no generation evaluated yet" }))).into_response(),
    }
}

#[derive(Deserialize)]
struct TopParam {
    top: Option<usize>,
}

async fn population(State(ctl): State<Controller>, Query(p): Query<TopParam>) -> Response {
    Json(ctl.top(p.top.unwrap_or(DEFAULT_TOP))).into_response()
}

async fn history(State(ctl): State<Controller>) -> Response {
    Json(ctl.history()).into_response()
}

async fn pending_labels(State(ctl): State<Controller>) -> Response {
    Json(ctl.pending_labels()).into_response()
}

/// 200 with the new status once applied, 202 if the engine is mid-generation.
async fn settle(ctl: Controller, ack: Ack) -> Response {
    let applied = tokio::task::spawn_blocking(move || ack.wait(ACK_WAIT)).await.unwrap_or(false);
    let code = if applied { StatusCode::OK } else { StatusCode::ACCEPTED };
    (code, Json(json!({ "status": ctl.status() }))).into_response()
}

async fn pause(State(ctl): State<Controller>) -> Result<Response, ApiError> {
    let ack = ctl.pause()?;
    Ok(settle(ctl, ack).await)
}

async fn resume(State(ctl): State<Controller>) -> Result<Response, ApiError> {
    let ack = ctl.resume()?;
    Ok(settle(ctl, ack).await)
}

async fn stop(State(ctl): State<Controller>) -> Result<Response, ApiError> {
    let ack = ctl.stop()?;
    Ok(settle(ctl, ack).await)
}

#[derive(Deserialize)]
struct InjectBody {
    queries: Vec<String>,
}

async fn inject(State(ctl): State<Controller>, Json(body): Json<InjectBody>) -> Result<Response, ApiError> {
    ctl.inject(&body.queries)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "queued": body.queries.len() }))).into_response())
}

#[derive(Deserialize)]
struct LabelBody {
    id: String,
    label: Label,
}

async fn label(State(ctl): State<Controller>, Json(body): Json<LabelBody>) -> Result<Response, ApiError> {
    ctl.label(&body.id, body.label)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "id": body.id, "label": body.label }))).into_response())
}
