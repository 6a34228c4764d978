//! HTTP/JSON routes.
//!
//! | method | path              | body                                  | reply         |
//! |--------|-------------------|---------------------------------------|---------------|
//! | POST   | `/session`        | `{"models"?: [id]}` or empty          | `SessionView` |
//! | POST   | `/chat`           | `{"session_id"?: id, "utterance": s}` | `ChatReply`   |
//! | POST   | `/vote`           | `{"line_id": id, "winner": id\|"TIE"}` | `VoteRecord`  |
//! | GET    | `/report`         |                                       | `Report`      |
//! | GET    | `/dialogues/{id}` |                                       | `SessionView` |
//!
//! Errors come back as `{"error": message}` with 400 for malformed JSON,
//! 404 for unknown sessions and 422 for everything the request got wrong.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gca_core::evaluation::Winner;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::agent::AppState;
use crate::error::{Result, ServiceError};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewSession {
    #[serde(default)]
    pub models: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatRequest {
    /// Empty or absent to start a new session.
    #[serde(default)]
    pub session_id: String,
    pub utterance: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoteRequest {
    pub line_id: String,
    pub winner: Winner,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/session", post(new_session))
        .route("/chat", post(chat))
        .route("/vote", post(vote))
        .route("/report", get(report))
        .route("/dialogues/{id}", get(dialogue))
        .with_state(state)
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T> {
    serde_json::from_slice(body).map_err(|e| {
        if e.is_data() {
            ServiceError::Validation(e.to_string())
        } else {
            ServiceError::BadRequest(e.to_string())
        }
    })
}

/// Runs model inference off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| std::panic::resume_unwind(e.into_panic()))
}

async fn new_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response> {
    let req: NewSession = if body.iter().all(u8::is_ascii_whitespace) {
        NewSession::default()
    } else {
        parse(&body)?
    };
    let view = state.create_session(req.models)?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn chat(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response> {
    let req: ChatRequest = parse(&body)?;
    let reply = blocking(move || state.chat(&req.session_id, &req.utterance)).await?;
    Ok(Json(reply).into_response())
}

async fn vote(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response> {
    let req: VoteRequest = parse(&body)?;
    let record = blocking(move || state.vote(&req.line_id, req.winner)).await?;
    Ok(Json(record).into_response())
}

async fn report(State(state): State<Arc<AppState>>) -> Result<Response> {
    let report = blocking(move || state.report()).await?;
    Ok(Json(report).into_response())
}

async fn dialogue(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response> {
    Ok(Json(state.session(&id)?).into_response())
}
