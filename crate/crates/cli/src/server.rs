//! HTTP API over a [`SessionManager`].
//!
//! All bodies are JSON and carry `schema_version`. Dialogue errors such as
//! an illegal move come back as `200` with an error body, because the
//! request itself was fine; unknown sessions, bad input and auth failures
//! use ordinary status codes. Each session also has a server-sent event
//! stream that repeats every turn reply.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use delib_core::session::{
    encode_log, CreateRequest, Input, SessionError, SessionManager, TurnReply, LOG_SCHEMA_VERSION,
};
use delib_core::stance::Feedback;
use futures::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

const EVENT_BUFFER: usize = 64;

#[derive(Clone)]
pub struct AppState {
    manager: Arc<SessionManager>,
    events: Arc<Mutex<HashMap<String, broadcast::Sender<SessionEvent>>>>,
    token: Option<Arc<str>>,
    static_dir: Option<PathBuf>,
    cors: bool,
}

impl AppState {
    pub fn new(manager: SessionManager, token: Option<String>) -> Self {
        AppState {
            manager: Arc::new(manager),
            events: Arc::default(),
            token: token.map(Into::into),
            static_dir: None,
            cors: false,
        }
    }

    /// Serves files under `dir` for any path the API does not claim.
    pub fn with_static_dir(mut self, dir: Option<PathBuf>) -> Self {
        self.static_dir = dir;
        self
    }

    /// Allows cross-origin requests from any origin.
    pub fn with_cors(mut self, cors: bool) -> Self {
        self.cors = cors;
        self
    }

    pub fn manager(&self) -> &SessionManager {
        &self.manager
    }

    fn sender(&self, id: &str) -> broadcast::Sender<SessionEvent> {
        self.events
            .lock()
            .expect("event table lock")
            .entry(id.to_owned())
            .or_insert_with(|| broadcast::channel(EVENT_BUFFER).0)
            .clone()
    }

    fn publish(&self, id: &str, event: SessionEvent) {
        // No subscribers is not an error.
        let _ = self.sender(id).send(event);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Turn(Box<TurnReply>),
    Closed { schema_version: u32, session_id: String },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub schema_version: u32,
    pub status: String,
    pub error: ErrorDetail,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

pub struct ApiError(StatusCode, String, String);

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError(status, code.to_owned(), message.into())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::UnknownSession(_) => StatusCode::NOT_FOUND,
            SessionError::UnknownCorpus(_) | SessionError::BadPrior(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::Closed(_) => StatusCode::CONFLICT,
            // The request was well-formed; the dialogue said no.
            SessionError::Dialog(_) => StatusCode::OK,
            SessionError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.code().to_owned(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            schema_version: LOG_SCHEMA_VERSION,
            status: "error".into(),
            error: ErrorDetail {
                code: self.1,
                message: self.2,
            },
        };
        (self.0, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))
}

#[derive(Serialize)]
struct Health {
    schema_version: u32,
    corpora: Vec<String>,
    sessions: usize,
}

async fn health(State(app): State<AppState>) -> Json<Health> {
    Json(Health {
        schema_version: LOG_SCHEMA_VERSION,
        corpora: app.manager.corpora().map(str::to_owned).collect(),
        sessions: app.manager.len(),
    })
}

async fn create(State(app): State<AppState>, Json(req): Json<CreateRequest>) -> ApiResult<Response> {
    let m = app.manager.clone();
    let record = blocking(move || m.create_session(req)).await??;
    Ok((StatusCode::CREATED, Json(record)).into_response())
}

async fn utterance(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(input): Json<Input>,
) -> ApiResult<Json<TurnReply>> {
    let m = app.manager.clone();
    let sid = id.clone();
    let reply = blocking(move || m.post_utterance(&sid, input)).await??;
    app.publish(&id, SessionEvent::Turn(Box::new(reply.clone())));
    Ok(Json(reply))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub target: String,
    pub feedback: Feedback,
}

async fn feedback(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<FeedbackRequest>,
) -> ApiResult<Json<TurnReply>> {
    let m = app.manager.clone();
    let sid = id.clone();
    let reply = blocking(move || m.post_feedback(&sid, &req.target, req.feedback)).await??;
    app.publish(&id, SessionEvent::Turn(Box::new(reply.clone())));
    Ok(Json(reply))
}

async fn state(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let m = app.manager.clone();
    let snap = blocking(move || m.get_state(&id)).await??;
    Ok(Json(snap).into_response())
}

async fn log(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let m = app.manager.clone();
    let entries = blocking(move || m.get_log(&id)).await??;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], encode_log(&entries)).into_response())
}

async fn close(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let m = app.manager.clone();
    let sid = id.clone();
    let record = blocking(move || m.close(&sid)).await??;
    app.publish(
        &id,
        SessionEvent::Closed {
            schema_version: LOG_SCHEMA_VERSION,
            session_id: id.clone(),
        },
    );
    Ok(Json(record).into_response())
}

async fn events(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, std::convert::Infallible>>>> {
    app.manager.session(&id)?;
    let rx = app.sender(&id).subscribe();
    let stream = stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(ev) => {
                    let name = match &ev {
                        SessionEvent::Turn(_) => "turn",
                        SessionEvent::Closed { .. } => "closed",
                    };
                    let event = Event::default()
                        .event(name)
                        .json_data(&ev)
                        .expect("events serialize");
                    return Some((Ok(event), rx));
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

async fn require_token(State(app): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &app.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == &**token);
        if !ok {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token")
                .into_response();
        }
    }
    next.run(req).await
}

pub fn router(app: AppState) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create))
        .route("/sessions/{id}/utterances", post(utterance))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/state", get(state))
        .route("/sessions/{id}/log", get(log))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/close", post(close))
        .layer(middleware::from_fn_with_state(app.clone(), require_token));
    let mut router = match &app.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    if app.cors {
        router = router.layer(CorsLayer::permissive());
    }
    router.with_state(app)
}

pub async fn serve(app: AppState, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
