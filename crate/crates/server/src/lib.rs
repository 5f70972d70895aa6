//! HTTP JSON API and per-session WebSocket event stream over
//! [`mesoscribe_core::session::Session`].
//!
//! Requests for one session run strictly one after another (the session
//! sits behind a mutex and every turn runs on the blocking pool); distinct
//! sessions run concurrently. The prompt store is shared by all sessions.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mesoscribe_core::engine::{Catalog, Instance, ViewState};
use mesoscribe_core::session::{BackendKind, Config, Session, SessionError, TurnOutcome};
use mesoscribe_core::translator::SharedPromptStore;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast;

/// Buffered events per session; slow WebSocket clients lose the oldest and
/// should re-fetch the scene.
pub const EVENT_BUFFER: usize = 1024;

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Connected {
        session_id: String,
        turn_count: usize,
        instance_count: usize,
    },
    TurnOutcome {
        outcome: Box<TurnOutcome>,
    },
    SceneDelta {
        turn_index: usize,
        added: Vec<[u64; 2]>,
        removed: Vec<[u64; 2]>,
        /// The instances in `added`.
        instances: Vec<Instance>,
        /// Present when the turn changed the view.
        view: Option<ViewState>,
    },
}

struct SessionHandle {
    session: Mutex<Session>,
    events: broadcast::Sender<String>,
}

pub struct AppState {
    config: Config,
    catalog: Arc<Catalog>,
    store: SharedPromptStore,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(config: Config) -> Result<AppState, SessionError> {
        Ok(AppState {
            catalog: Arc::new(config.catalog()?),
            store: config.prompt_store()?.shared(),
            config,
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    fn handle(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{id}`")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: String) -> Self {
        ApiError {
            status,
            kind: kind.into(),
            message,
        }
    }

    fn bad_request(message: String) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::UnknownTurn(_) => StatusCode::NOT_FOUND,
            SessionError::AmbiguousSelectionPending => StatusCode::CONFLICT,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.kind(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": {"kind": self.kind, "message": self.message}}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn publish(handle: &SessionHandle, session: &Session, outcome: &TurnOutcome) {
    let delta = &outcome.delta;
    let instances = session
        .scene()
        .instances
        .iter()
        .filter(|i| delta.added.iter().any(|r| (r[0]..r[1]).contains(&i.id)))
        .cloned()
        .collect();
    let events = [
        Event::TurnOutcome {
            outcome: Box::new(outcome.clone()),
        },
        Event::SceneDelta {
            turn_index: outcome.turn_index,
            added: delta.added.clone(),
            removed: delta.removed.clone(),
            instances,
            view: delta.view_changed.then(|| session.scene().view.clone()),
        },
    ];
    for e in events {
        // no subscribers is fine
        let _ = handle.events.send(serde_json::to_string(&e).expect("events serialize"));
    }
}

/// Run `f` on the session off the async executor and publish the outcome.
async fn turn(
    state: &AppState,
    id: &str,
    f: impl FnOnce(&mut Session) -> TurnOutcome + Send + 'static,
) -> ApiResult<Json<TurnOutcome>> {
    let handle = state.handle(id)?;
    let outcome = tokio::task::spawn_blocking(move || {
        let mut session = handle.session.lock().unwrap_or_else(|e| e.into_inner());
        let outcome = f(&mut session);
        publish(&handle, &session, &outcome);
        outcome
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    Ok(Json(outcome))
}

fn body<T: for<'de> Deserialize<'de>>(bytes: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CreateSession {
    seed: Option<u64>,
    backend: Option<String>,
}

async fn create_session(State(state): State<Arc<AppState>>, bytes: Bytes) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let req: CreateSession = if bytes.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        body(&bytes)?
    };
    let mut config = state.config.clone();
    if let Some(b) = &req.backend {
        config.backend =
            BackendKind::parse(b).ok_or_else(|| ApiError::bad_request(format!("unknown backend `{b}`; use mock or remote")))?;
    }
    let seed = req.seed.unwrap_or(config.seed);
    let id = format!("s{}", state.next_id.fetch_add(1, Ordering::SeqCst));
    let session = Session::new(&id, seed, state.catalog.clone(), state.store.clone(), config.backend())
        .with_model_path(config.models_dir.as_ref().map(|d| d.join(format!("{id}.json"))));
    let backend = session.backend_name().to_string();
    let (events, _) = broadcast::channel(EVENT_BUFFER);
    let handle = Arc::new(SessionHandle {
        session: Mutex::new(session),
        events,
    });
    state.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(id.clone(), handle);
    Ok((StatusCode::CREATED, Json(json!({"id": id, "seed": seed, "backend": backend}))))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageReq {
    text: String,
}

async fn message(State(state): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Json<TurnOutcome>> {
    let req: MessageReq = body(&bytes)?;
    turn(&state, &id, move |s| s.handle_turn(&req.text)).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectReq {
    candidate_index: usize,
}

async fn select(State(state): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Json<TurnOutcome>> {
    let req: SelectReq = body(&bytes)?;
    turn(&state, &id, move |s| s.select(req.candidate_index)).await
}

async fn cancel(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<TurnOutcome>> {
    turn(&state, &id, |s| s.cancel()).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleReq {
    rule_id: u64,
}

async fn apply_rule(State(state): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Json<TurnOutcome>> {
    let req: RuleReq = body(&bytes)?;
    turn(&state, &id, move |s| s.apply_rule(req.rule_id)).await
}

async fn revert_rule(State(state): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Json<TurnOutcome>> {
    let req: RuleReq = body(&bytes)?;
    turn(&state, &id, move |s| s.revert_rule(req.rule_id)).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackReq {
    turn_index: usize,
    corrected_output: String,
}

async fn feedback(State(state): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Json<TurnOutcome>> {
    let req: FeedbackReq = body(&bytes)?;
    let handle = state.handle(&id)?;
    let result = tokio::task::spawn_blocking(move || {
        let mut session = handle.session.lock().unwrap_or_else(|e| e.into_inner());
        let outcome = session.submit_feedback(req.turn_index, &req.corrected_output)?;
        publish(&handle, &session, &outcome);
        Ok::<_, SessionError>(outcome)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    Ok(Json(result?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AutomaticReq {
    description: String,
}

/// Runs the whole sequence; each step is also pushed to WebSocket
/// subscribers as it completes.
async fn automatic(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult<Json<Vec<TurnOutcome>>> {
    let req: AutomaticReq = body(&bytes)?;
    let handle = state.handle(&id)?;
    let outcomes = tokio::task::spawn_blocking(move || {
        let mut session = handle.session.lock().unwrap_or_else(|e| e.into_inner());
        let mut out = Vec::new();
        session.run_automatic_each(&req.description, |s, o| {
            publish(&handle, s, o);
            out.push(o.clone());
        });
        out
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    Ok(Json(outcomes))
}

/// Read-only snapshot taken under the session lock.
async fn read<T: Send + 'static>(state: &AppState, id: &str, f: impl FnOnce(&Session) -> T + Send + 'static) -> ApiResult<T> {
    let handle = state.handle(id)?;
    tokio::task::spawn_blocking(move || f(&handle.session.lock().unwrap_or_else(|e| e.into_inner())))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))
}

async fn scene(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let text = read(&state, &id, |s| s.scene().to_json()).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

async fn history(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let text = read(&state, &id, |s| serde_json::to_string(s.history()).expect("history serializes")).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

async fn catalog(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let ingredients: Vec<_> = state
        .catalog
        .ingredients
        .values()
        .map(|i| json!({"name": i.name, "bounding_radius": i.bounding_radius, "color": i.color, "chains": i.chains}))
        .collect();
    Json(json!({"ingredients": ingredients, "skeletons": state.catalog.skeleton_names()}))
}

async fn events(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> ApiResult<Response> {
    let handle = state.handle(&id)?;
    Ok(ws.on_upgrade(move |socket| stream_events(socket, id, handle)))
}

async fn stream_events(mut socket: WebSocket, id: String, handle: Arc<SessionHandle>) {
    // subscribe before reading counts so no event falls between them
    let mut rx = handle.events.subscribe();
    let hello = {
        let s = handle.session.lock().unwrap_or_else(|e| e.into_inner());
        Event::Connected {
            session_id: id,
            turn_count: s.history().len(),
            instance_count: s.scene().instances.len(),
        }
    };
    if socket
        .send(Message::Text(serde_json::to_string(&hello).expect("events serialize").into()))
        .await
        .is_err()
    {
        return;
    }
    loop {
        tokio::select! {
            ev = rx.recv() => match ev {
                Ok(text) => {
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    let note = json!({"type": "lagged", "missed": n}).to_string();
                    if socket.send(Message::Text(note.into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Closed) => return,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/catalog", get(catalog))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/message", post(message))
        .route("/sessions/{id}/select", post(select))
        .route("/sessions/{id}/cancel", post(cancel))
        .route("/sessions/{id}/apply-rule", post(apply_rule))
        .route("/sessions/{id}/revert-rule", post(revert_rule))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/automatic", post(automatic))
        .route("/sessions/{id}/scene", get(scene))
        .route("/sessions/{id}/history", get(history))
        .route("/sessions/{id}/events", get(events))
        .with_state(state)
}

/// Serve until the process is stopped.
pub async fn serve(addr: SocketAddr, config: Config) -> std::io::Result<()> {
    let state = Arc::new(AppState::new(config).map_err(|e| std::io::Error::other(e.to_string()))?);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
