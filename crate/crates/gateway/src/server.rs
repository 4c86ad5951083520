//! JSON-over-HTTP service backing the annotation UI.
//!
//! Handlers only translate between HTTP and [`Workspace`]; every number in a
//! response comes from the core crate.

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use relct::annotation::{codes_from_entries, CodeEntry};
use relct::codebook::AnnotationIssue;
use relct::metrics::MetricsError;
use relct::stats::{cohen_kappa, KappaResult, StatsError};
use relct::{transcript, Level};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::workspace::{Workspace, WorkspaceError};

pub const DEFAULT_PORT: u16 = 7457;

pub type SharedWorkspace = Arc<Workspace>;

pub fn router(workspace: SharedWorkspace) -> Router {
    Router::new()
        .route("/api/conversations", get(list_conversations))
        .route("/api/conversations/{id}", get(get_conversation))
        .route(
            "/api/conversations/{id}/annotations/{coder}",
            get(get_annotation).put(put_annotation),
        )
        .route("/api/conversations/{id}/scorecard", get(get_scorecard))
        .route("/api/conversations/{id}/kappa", get(get_kappa))
        .route("/api/matrix", get(get_matrix))
        .with_state(workspace)
}

/// Error body: `{"error": message, "diagnostics": [{turn, kind, message}]}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    diagnostics: Vec<AnnotationIssue>,
    current_revision: Option<u64>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            diagnostics: Vec::new(),
            current_revision: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, message)
    }
}

fn diagnostics_json(issues: &[AnnotationIssue]) -> Value {
    issues
        .iter()
        .map(|i| {
            let mut v = serde_json::to_value(i).expect("issue serializes");
            v["message"] = json!(i.to_string());
            v
        })
        .collect()
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if !self.diagnostics.is_empty() {
            body["diagnostics"] = diagnostics_json(&self.diagnostics);
        }
        if let Some(rev) = self.current_revision {
            body["current_revision"] = json!(rev);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<WorkspaceError> for ApiError {
    fn from(e: WorkspaceError) -> Self {
        let message = e.to_string();
        match e {
            WorkspaceError::UnknownConversation(_) | WorkspaceError::UnknownAnnotation { .. } => {
                ApiError::new(StatusCode::NOT_FOUND, message)
            }
            WorkspaceError::StaleRevision { current, .. } => ApiError {
                current_revision: Some(current),
                ..ApiError::new(StatusCode::CONFLICT, message)
            },
            WorkspaceError::InvalidCodes(issues)
            | WorkspaceError::Score(MetricsError::InvalidAnnotation(issues)) => ApiError {
                diagnostics: issues,
                ..ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, message)
            },
            WorkspaceError::BadIdentifier(_) => ApiError::bad_request(message),
            WorkspaceError::Score(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, message),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, message),
        }
    }
}

impl From<StatsError> for ApiError {
    fn from(e: StatsError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
    }
}

fn etag(revision: u64) -> HeaderValue {
    HeaderValue::from_str(&format!("\"{revision}\"")).expect("ascii")
}

fn canonical_json(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn list_conversations(State(ws): State<SharedWorkspace>) -> Json<Value> {
    let items: Vec<Value> = ws
        .conversation_ids()
        .filter_map(|id| ws.conversation(id).ok())
        .map(|c| {
            json!({
                "id": c.id,
                "participant": c.participant(),
                "turns": c.turns.len(),
                "speakers": c.speakers.iter().map(|s| json!({"id": s.id, "role": s.role, "name": s.display_name})).collect::<Vec<_>>(),
                "coders": ws.coders(&c.id),
            })
        })
        .collect();
    Json(Value::Array(items))
}

async fn get_conversation(State(ws): State<SharedWorkspace>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let conv = ws.conversation(&id)?;
    let mut v = transcript::to_json_value(&conv);
    // markers are derived, but the UI highlights them without re-parsing
    if let Some(turns) = v["turns"].as_array_mut() {
        for (t, turn) in turns.iter_mut().zip(&conv.turns) {
            t["markers"] = json!(turn.markers);
            t["degenerate"] = json!(turn.is_degenerate());
            t["role"] = json!(conv.role_of(&turn.speaker_id));
        }
    }
    Ok(Json(v))
}

async fn get_annotation(
    State(ws): State<SharedWorkspace>,
    Path((id, coder)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let ann = ws.annotation(&id, &coder)?;
    let mut resp = Json(ann.to_json_value()).into_response();
    resp.headers_mut().insert(header::ETAG, etag(ann.revision));
    Ok(resp)
}

/// PUT body: `{"codes": [{turn, format, mode}]}`; other annotation fields in
/// the body are ignored since the path and `If-Match` carry them.
#[derive(Debug, Deserialize)]
struct PutBody {
    codes: Vec<CodeEntry>,
}

fn if_match(headers: &HeaderMap) -> Result<u64, ApiError> {
    let raw = headers.get(header::IF_MATCH).ok_or_else(|| {
        ApiError::new(
            StatusCode::PRECONDITION_REQUIRED,
            "If-Match with the current revision is required (0 for a new annotation)",
        )
    })?;
    raw.to_str()
        .ok()
        .map(|s| s.trim().trim_start_matches("W/").trim_matches('"'))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ApiError::bad_request("If-Match must be a revision number"))
}

async fn put_annotation(
    State(ws): State<SharedWorkspace>,
    Path((id, coder)): Path<(String, String)>,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> Result<Response, ApiError> {
    let expected = if_match(&headers)?;
    let body: PutBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid body: {e}")))?;
    let codes = codes_from_entries(&body.codes).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let ann = ws.put_annotation(&id, &coder, expected, codes)?;
    let mut resp = Json(ann.to_json_value()).into_response();
    resp.headers_mut().insert(header::ETAG, etag(ann.revision));
    Ok(resp)
}

#[derive(Debug, Deserialize)]
struct ScorecardQuery {
    coder: String,
    #[serde(default)]
    strict: bool,
}

async fn get_scorecard(
    State(ws): State<SharedWorkspace>,
    Path(id): Path<String>,
    Query(q): Query<ScorecardQuery>,
) -> Result<Response, ApiError> {
    let card = ws.scorecard(&id, &q.coder, q.strict)?;
    Ok(canonical_json(card.to_canonical_json()))
}

#[derive(Debug, Deserialize)]
struct KappaQuery {
    coders: String,
    #[serde(default)]
    level: Option<String>,
    /// Comma-separated turn indices.
    #[serde(default)]
    scope: Option<String>,
}

async fn get_kappa(
    State(ws): State<SharedWorkspace>,
    Path(id): Path<String>,
    Query(q): Query<KappaQuery>,
) -> Result<Json<KappaResult<f64>>, ApiError> {
    let coders: Vec<&str> = q.coders.split(',').map(str::trim).collect();
    let [a, b] = coders.as_slice() else {
        return Err(ApiError::bad_request("coders must name exactly two coders, e.g. coders=A,B"));
    };
    let level: Level = match q.level.as_deref() {
        None => Level::Control,
        Some(l) => l.parse().map_err(ApiError::bad_request)?,
    };
    let scope: Option<BTreeSet<usize>> = match &q.scope {
        None => None,
        Some(s) => Some(
            s.split(',')
                .map(|t| t.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| ApiError::bad_request("scope must be comma-separated turn indices"))?,
        ),
    };
    let ann_a = ws.annotation(&id, a)?;
    let ann_b = ws.annotation(&id, b)?;
    Ok(Json(cohen_kappa(&ann_a, &ann_b, level, scope.as_ref(), ws.matrix())?))
}

async fn get_matrix(State(ws): State<SharedWorkspace>) -> Json<Value> {
    Json(ws.matrix().to_json_value())
}

/// Binds and serves until Ctrl-C.
pub async fn serve(workspace: SharedWorkspace, host: &str, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    eprintln!("relct: serving {} on http://{}", workspace.root().display(), listener.local_addr()?);
    axum::serve(listener, router(workspace))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
