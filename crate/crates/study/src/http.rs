//! JSON API over a [`Study`].

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use prosody_core::triad::Judgment;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::store::{Study, StudyError};

#[derive(Clone)]
pub struct AppState {
    pub study: Arc<Study>,
    pub clips: Arc<HashMap<String, PathBuf>>,
}

impl IntoResponse for StudyError {
    fn into_response(self) -> Response {
        let status = match &self {
            StudyError::StudyComplete(_) | StudyError::DuplicateJudgment { .. } => StatusCode::CONFLICT,
            StudyError::UnknownTriad(_) | StudyError::NotFound(_) => StatusCode::NOT_FOUND,
            StudyError::SessionMismatch { .. } => StatusCode::FORBIDDEN,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

#[derive(Debug, Deserialize)]
pub struct NewSession {
    pub rater_id: String,
}

/// What a rater's client needs to present one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriadView {
    pub triad_id: String,
    pub lexical_form: String,
    pub clips: [String; 3],
}

const PLACEHOLDER: &str = "<!doctype html><title>Listening study</title>\
<p>The listening-test interface is not installed. Start the server with a static directory to serve it.</p>";

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/session", post(create_session))
        .route("/api/session/{id}", get(get_session))
        .route("/api/triad/{id}", get(get_triad))
        .route("/api/audio/{clip_id}", get(get_audio))
        .route("/api/judgment", post(post_judgment))
        .route("/api/export", get(export))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER) })),
    }
}

async fn create_session(State(s): State<AppState>, Json(req): Json<NewSession>) -> Response {
    match s.study.create_session(req.rater_id.trim()) {
        Ok(view) => (StatusCode::CREATED, Json(view)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn get_session(State(s): State<AppState>, Path(id): Path<String>) -> Response {
    match s.study.session(&id) {
        Some(v) => Json(v).into_response(),
        None => StudyError::NotFound(id).into_response(),
    }
}

async fn get_triad(State(s): State<AppState>, Path(id): Path<String>) -> Response {
    match s.study.triad(&id) {
        Some(t) => Json(TriadView {
            triad_id: t.triad_id,
            lexical_form: t.lexical_form,
            clips: t.clips,
        })
        .into_response(),
        None => StudyError::UnknownTriad(id).into_response(),
    }
}

async fn get_audio(State(s): State<AppState>, Path(clip_id): Path<String>) -> Response {
    let Some(path) = s.clips.get(&clip_id) else {
        return StudyError::NotFound(clip_id).into_response();
    };
    match tokio::fs::read(path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response(),
        Err(source) => StudyError::Io {
            path: path.clone(),
            source,
        }
        .into_response(),
    }
}

async fn post_judgment(State(s): State<AppState>, Json(mut j): Json<Judgment>) -> Response {
    if j.timestamp == 0 {
        j.timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
    }
    match s.study.record_judgment(j) {
        Ok(_) => StatusCode::CREATED.into_response(),
        Err(e) => e.into_response(),
    }
}

async fn export(State(s): State<AppState>) -> Response {
    let mut body = String::new();
    for j in s.study.export_judgments() {
        body.push_str(&serde_json::to_string(&j).expect("judgments serialize"));
        body.push('\n');
    }
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}
