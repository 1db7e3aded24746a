//! HTTP+JSON front of the session store.
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | GET | `/cases` | | `[{id, name, revision}]` |
//! | POST | `/cases` | case file JSON | `201 {id, revision}` |
//! | GET | `/cases/{id}/state` | | `{case_id, revision, hypotheses, amplitudes, coherence, step, outcome}` |
//! | GET | `/cases/{id}/case` | | canonical case file JSON |
//! | GET | `/cases/{id}/log` | | log records as JSON lines |
//! | POST | `/cases/{id}/observations` | `{id, statement, weight?, overrides?}` | `{revision, amplitudes, coherence, outcome, trace}` |
//! | PUT | `/cases/{id}/interference` | `{i, j, value}` | `{revision, i, j, value}` |
//! | POST | `/cases/{id}/collapse` | | `{revision, outcome}` |
//! | POST | `/cases/{id}/fork` | `{drop_observation_ids?, extra_overrides?, at_revision?}` | `201 {id, revision}` |
//! | GET | `/cases/{id}/compare` | | comparison report |
//! | GET | `/cases/{id}/map?format=dot\|json` | | DOT text or map JSON |
//! | GET | `/cases/{id}/events?from=N` | | push events as JSON lines, history first |
//!
//! Errors are `{code, message}`: 404 for an unknown case, 400 for malformed
//! or invalid input, 409 when the request is well formed but the case state
//! refuses it (degenerate step, non-qualitative comparison), 500 for log I/O.

use std::convert::Infallible;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use qabd::casebook::{load_case, CasebookError, ObservationDoc};
use qabd::classical::ClassicalError;
use qabd::dynamics::{coherence, DynamicsError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::log::{to_jsonl, LogEvent, LogRecord};
use crate::session::{ForkRequest, SessionError};
use crate::store::SessionStore;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ApiErrorBody {
            code: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let message = e.to_string();
        let (status, code) = match &e {
            SessionError::UnknownCase(_) => (StatusCode::NOT_FOUND, "unknown-case"),
            SessionError::ValidationFailed(_) => (StatusCode::BAD_REQUEST, "validation-failed"),
            SessionError::DiagonalOverride(_) => (StatusCode::BAD_REQUEST, "diagonal-override"),
            SessionError::BadValue(_) => (StatusCode::BAD_REQUEST, "bad-value"),
            SessionError::BadIndex { .. } => (StatusCode::BAD_REQUEST, "bad-index"),
            SessionError::BadRevision { .. } => (StatusCode::BAD_REQUEST, "bad-revision"),
            SessionError::UnknownObservation(_) => (StatusCode::BAD_REQUEST, "unknown-observation"),
            SessionError::Dynamics(DynamicsError::DegenerateState { .. }) => (StatusCode::CONFLICT, "degenerate-state"),
            SessionError::Dynamics(DynamicsError::Embed(_)) => (StatusCode::BAD_REQUEST, "embedding-failed"),
            SessionError::Dynamics(_) => (StatusCode::CONFLICT, "engine-error"),
            SessionError::Classical(ClassicalError::NonQualitativeMatrix { .. }) => {
                (StatusCode::CONFLICT, "non-qualitative-matrix")
            }
            SessionError::Classical(_) => (StatusCode::CONFLICT, "engine-error"),
            SessionError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "log-io"),
        };
        Self::new(status, code, message)
    }
}

impl From<CasebookError> for ApiError {
    fn from(e: CasebookError) -> Self {
        let code = match e {
            CasebookError::Parse(_) => "parse",
            CasebookError::SchemaViolation(_) => "schema-violation",
            CasebookError::ValidationFailed(_) => "validation-failed",
            CasebookError::Io(_) => "io",
        };
        Self::new(StatusCode::BAD_REQUEST, code, e.to_string())
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &str) -> Result<T, ApiError> {
    serde_json::from_str(body).map_err(|e| {
        let code = if e.is_data() { "schema-violation" } else { "parse" };
        ApiError::new(StatusCode::BAD_REQUEST, code, e.to_string())
    })
}

/// Engine work runs off the async workers; a remote embedder may block.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

type Shared = State<Arc<SessionStore>>;

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/cases", get(list_cases).post(create_case))
        .route("/cases/{id}/state", get(state))
        .route("/cases/{id}/case", get(case_file))
        .route("/cases/{id}/log", get(log))
        .route("/cases/{id}/observations", post(observe))
        .route("/cases/{id}/interference", put(interfere))
        .route("/cases/{id}/collapse", post(collapse))
        .route("/cases/{id}/fork", post(fork))
        .route("/cases/{id}/compare", get(compare))
        .route("/cases/{id}/map", get(map))
        .route("/cases/{id}/events", get(events))
        .with_state(store)
}

async fn list_cases(State(store): Shared) -> Json<Value> {
    Json(json!(store.list()))
}

async fn create_case(State(store): Shared, body: String) -> Result<(StatusCode, Json<Value>), ApiError> {
    let case = load_case(&body)?;
    blocking(move || {
        let id = store.create(case)?;
        let revision = store.read_case(&id, |s| s.revision())?;
        Ok((StatusCode::CREATED, Json(json!({ "id": id, "revision": revision }))))
    })
    .await
}

async fn state(State(store): Shared, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    Ok(Json(json!(store.read_case(&id, |s| s.view())?)))
}

async fn case_file(State(store): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let text = store.read_case(&id, |s| qabd::serialize_case(s.case()))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

async fn log(State(store): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let text = store.read_case(&id, |s| to_jsonl(s.records()))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

fn observation_reply(record: &LogRecord) -> Value {
    let LogEvent::Observation { trace, outcome, .. } = &record.event else {
        unreachable!("observation records only");
    };
    json!({
        "revision": record.revision,
        "amplitudes": record.amplitudes,
        "coherence": coherence(&trace.post),
        "outcome": outcome,
        "trace": trace,
    })
}

async fn observe(State(store): Shared, Path(id): Path<String>, body: String) -> Result<Json<Value>, ApiError> {
    let doc: ObservationDoc = parse_json(&body)?;
    blocking(move || {
        let record = store.apply_observation(&id, doc)?;
        Ok(Json(observation_reply(&record)))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OverrideBody {
    i: usize,
    j: usize,
    value: f64,
}

async fn interfere(State(store): Shared, Path(id): Path<String>, body: String) -> Result<Json<Value>, ApiError> {
    let b: OverrideBody = parse_json(&body)?;
    blocking(move || {
        let record = store.override_interference(&id, b.i, b.j, b.value)?;
        Ok(Json(
            json!({ "revision": record.revision, "i": b.i, "j": b.j, "value": b.value }),
        ))
    })
    .await
}

async fn collapse(State(store): Shared, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    blocking(move || {
        let (outcome, record) = store.force_collapse(&id)?;
        Ok(Json(json!({ "revision": record.revision, "outcome": outcome })))
    })
    .await
}

async fn fork(
    State(store): Shared,
    Path(id): Path<String>,
    body: String,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let request: ForkRequest = if body.trim().is_empty() {
        ForkRequest::default()
    } else {
        parse_json(&body)?
    };
    blocking(move || {
        let new_id = store.fork(&id, &request)?;
        let revision = store.read_case(&new_id, |s| s.revision())?;
        Ok((StatusCode::CREATED, Json(json!({ "id": new_id, "revision": revision }))))
    })
    .await
}

async fn compare(State(store): Shared, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    blocking(move || {
        let report = store.read_case(&id, |s| s.compare())??;
        Ok(Json(json!(report)))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct MapQuery {
    format: Option<String>,
}

async fn map(State(store): Shared, Path(id): Path<String>, Query(q): Query<MapQuery>) -> Result<Response, ApiError> {
    match q.format.as_deref().unwrap_or("json") {
        "json" => Ok(Json(json!(store.read_case(&id, |s| s.map())?)).into_response()),
        "dot" => {
            let dot = store.read_case(&id, |s| s.map_dot())?;
            Ok(([(header::CONTENT_TYPE, "text/vnd.graphviz")], dot).into_response())
        }
        other => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "bad-format",
            format!("unknown map format `{other}` (expected dot or json)"),
        )),
    }
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    from: Option<u64>,
}

async fn events(
    State(store): Shared,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
) -> Result<Response, ApiError> {
    let subscription = store.subscribe(&id, q.from.unwrap_or(0))?;
    let stream = futures::stream::unfold(subscription, |mut sub| async move {
        let event = sub.next().await?;
        let mut line = serde_json::to_vec(&event).expect("push events serialize");
        line.push(b'\n');
        Some((Ok::<_, Infallible>(Bytes::from(line)), sub))
    });
    Ok((
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        Body::from_stream(stream),
    )
        .into_response())
}

/// Serves until the listener fails or the process is stopped.
pub async fn serve(listener: tokio::net::TcpListener, store: Arc<SessionStore>) -> std::io::Result<()> {
    axum::serve(listener, router(store)).await
}
