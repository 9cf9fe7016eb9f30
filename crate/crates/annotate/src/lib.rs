//! HTTP service for blinded human validation of machine stance labels.
//!
//! Raters authenticate with a bearer token, work through a seeded sample of
//! classified abstracts one item at a time, and can ask for their agreement
//! with the machine labels or with another rater. Sessions and labels are
//! appended to `sessions.jsonl` and `labels.jsonl`; restarting the service
//! replays both.
//!
//! | method | path | body / query |
//! |---|---|---|
//! | `POST` | `/sessions` | `{rater_id, n, seed}` |
//! | `GET` | `/sessions/{id}/next` | |
//! | `POST` | `/sessions/{id}/labels` | `{item_id, label, confidence, justification_choice}` |
//! | `GET` | `/sessions/{id}/irr` | `?reference=machine_original\|machine_revised\|other_rater:<id>` |
//! | `GET` | `/health` | |

mod error;
mod service;

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::HeaderMap;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

pub use error::{ErrorBody, ServiceError};
pub use service::{
    Ack, AnnotationItem, AnnotationService, AnnotationSession, HumanLabel, LabelSubmission, NextItem, Provenance,
    Reference, SessionIrr, SessionItem,
};

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<AnnotationService>,
    /// Bearer token to rater id.
    pub tokens: Arc<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub rater_id: String,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub rater_id: String,
    pub total: usize,
    pub cursor: usize,
    pub created_at: String,
}

#[derive(Debug, Deserialize)]
struct IrrQuery {
    reference: Option<String>,
}

fn rater(state: &AppState, headers: &HeaderMap) -> Result<String, ServiceError> {
    let header = headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .ok_or_else(|| ServiceError::Unauthorized("missing bearer token".into()))?;
    let token = header
        .strip_prefix("Bearer ")
        .map(str::trim)
        .ok_or_else(|| ServiceError::Unauthorized("authorization must be a bearer token".into()))?;
    state
        .tokens
        .get(token)
        .cloned()
        .ok_or_else(|| ServiceError::Unauthorized("unknown token".into()))
}

fn owned(state: &AppState, headers: &HeaderMap, session_id: &str) -> Result<(), ServiceError> {
    let who = rater(state, headers)?;
    let session = state.service.session(session_id)?;
    if session.rater_id != who {
        return Err(ServiceError::Forbidden(format!(
            "session '{session_id}' belongs to another rater"
        )));
    }
    Ok(())
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn create(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Result<Json<CreateSession>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<SessionCreated>, ServiceError> {
    let who = rater(&state, &headers)?;
    let Json(req) = body.map_err(|e| ServiceError::Validation(e.body_text()))?;
    if req.rater_id != who {
        return Err(ServiceError::Forbidden(format!(
            "token does not belong to rater '{}'",
            req.rater_id
        )));
    }
    let service = state.service.clone();
    // rephrasing may call out to a model, so keep it off the async workers
    let session = tokio::task::spawn_blocking(move || service.create_session(&req.rater_id, req.n, req.seed))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
    let cursor = state.service.labels(&session.session_id).len();
    Ok(Json(SessionCreated {
        total: session.items.len(),
        cursor,
        session_id: session.session_id,
        rater_id: session.rater_id,
        created_at: session.created_at,
    }))
}

async fn next(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<NextItem>, ServiceError> {
    owned(&state, &headers, &id)?;
    Ok(Json(state.service.next_item(&id)?))
}

async fn submit(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Result<Json<LabelSubmission>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<Ack>, ServiceError> {
    owned(&state, &headers, &id)?;
    let Json(sub) = body.map_err(|e| ServiceError::Validation(e.body_text()))?;
    Ok(Json(state.service.submit_label(&id, &sub)?))
}

async fn irr(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Query(q): Query<IrrQuery>,
) -> Result<Json<SessionIrr>, ServiceError> {
    owned(&state, &headers, &id)?;
    let reference: Reference = q.reference.as_deref().unwrap_or("machine_revised").parse()?;
    Ok(Json(state.service.session_irr(&id, &reference)?))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/labels", post(submit))
        .route("/sessions/{id}/irr", get(irr))
        .with_state(state)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
    log::info!("shutting down");
}

/// Serves `state` on `addr` until interrupt or SIGTERM, then returns after
/// in-flight requests finish.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown_signal())
        .await
}
