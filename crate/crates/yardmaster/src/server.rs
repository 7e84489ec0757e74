//! HTTP control API and event stream over a running session.
//!
//! One task owns the stepping loop. Handlers take the session lock, which
//! the loop holds for a whole step, so reads and writes land on step
//! boundaries.

use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::{broadcast, Notify};
use tokio::task::JoinHandle;
use yardmaster_core::blackboard::Value;
use yardmaster_core::comms::TaskId;
use yardmaster_core::orchestrator::{Session, SessionError};

#[derive(Debug, Clone, Copy)]
pub struct ServeOptions {
    /// Simulated seconds per wall second; zero runs as fast as possible.
    pub rate: f64,
    /// Events kept for slow subscribers before they start missing some.
    pub event_buffer: usize,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self { rate: 1.0, event_buffer: 4096 }
    }
}

#[derive(Clone)]
pub struct AppState {
    session: Arc<Mutex<Session>>,
    events: broadcast::Sender<Arc<str>>,
    wake: Arc<Notify>,
}

impl AppState {
    fn lock(&self) -> MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Runs `f` on the session and publishes whatever events it produced.
    pub fn with_session<R>(&self, f: impl FnOnce(&mut Session) -> R) -> R {
        let mut s = self.lock();
        let out = f(&mut s);
        self.publish(&mut s);
        out
    }

    fn publish(&self, s: &mut Session) {
        for e in s.take_events() {
            // no subscribers is fine
            let _ = self.events.send(e.to_json().into());
        }
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Arc<str>> {
        self.events.subscribe()
    }
}

/// A session being stepped in the background.
pub struct Service {
    pub state: AppState,
    pub stepper: JoinHandle<()>,
}

impl Service {
    /// Must be called inside a tokio runtime.
    pub fn spawn(session: Session, opts: ServeOptions) -> Self {
        let (events, _) = broadcast::channel(opts.event_buffer.max(1));
        let state = AppState { session: Arc::new(Mutex::new(session)), events, wake: Arc::new(Notify::new()) };
        let stepper = tokio::spawn(step_loop(state.clone(), opts));
        Self { state, stepper }
    }

    pub fn router(&self) -> Router {
        router(self.state.clone())
    }
}

async fn step_loop(state: AppState, opts: ServeOptions) {
    let dt = state.lock().site().config.dt;
    let mut ticker = (opts.rate > 0.0).then(|| {
        let mut t = tokio::time::interval(Duration::from_secs_f64(dt / opts.rate));
        t.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        t
    });
    loop {
        if !state.lock().busy() {
            state.wake.notified().await;
            if let Some(t) = ticker.as_mut() {
                t.reset();
            }
            continue;
        }
        match ticker.as_mut() {
            Some(t) => {
                t.tick().await;
            }
            None => tokio::task::yield_now().await,
        }
        let mut s = state.lock();
        if !s.busy() {
            continue;
        }
        if let Err(e) = s.step() {
            tracing::error!("step failed, stopping all machines: {e}");
            let _ = state.events.send(json!({ "event": "error", "message": e.to_string() }).to_string().into());
            s.emergency_stop();
        }
        state.publish(&mut s);
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/tasks", get(list_tasks))
        .route("/tasks/{task_id}/start", post(start_task))
        .route("/emergency_stop", post(emergency_stop))
        .route("/state", get(get_state))
        .route("/blackboard", get(get_blackboard))
        .route("/blackboard/{key}", post(set_flag))
        .route("/events", get(events))
        .with_state(state)
}

pub struct ApiError(StatusCode, String);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let code = match &e {
            SessionError::TaskNotFound(_) => StatusCode::NOT_FOUND,
            SessionError::MachineBusy { .. } | SessionError::EStopLatched => StatusCode::CONFLICT,
            SessionError::FlagNotOverridable(_) => StatusCode::FORBIDDEN,
            SessionError::Parse { .. } | SessionError::UnknownSubtask { .. } | SessionError::Blackboard(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            SessionError::Store(_) | SessionError::Tick(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

async fn list_tasks(State(st): State<AppState>) -> impl IntoResponse {
    Json(st.lock().tasks())
}

async fn start_task(State(st): State<AppState>, Path(task_id): Path<TaskId>) -> Result<impl IntoResponse, ApiError> {
    let task = st.with_session(|s| {
        s.start_task(task_id)?;
        Ok::<_, SessionError>(s.state().tasks.into_iter().find(|t| t.task_id == task_id))
    })?;
    st.wake.notify_one();
    Ok((StatusCode::ACCEPTED, Json(task)))
}

/// Stops, then takes one step so the zeroed commands reach the machines
/// even though nothing is left running to drive the loop.
async fn emergency_stop(State(st): State<AppState>) -> Result<impl IntoResponse, ApiError> {
    let report = st.with_session(|s| {
        let report = s.emergency_stop();
        s.step()?;
        Ok::<_, SessionError>(report)
    })?;
    Ok(Json(report))
}

async fn get_state(State(st): State<AppState>) -> impl IntoResponse {
    Json(st.lock().state())
}

async fn get_blackboard(State(st): State<AppState>) -> impl IntoResponse {
    Json(st.lock().blackboard().global)
}

#[derive(Debug, Deserialize)]
struct FlagBody {
    value: Value,
}

async fn set_flag(
    State(st): State<AppState>,
    Path(key): Path<String>,
    Json(body): Json<FlagBody>,
) -> Result<impl IntoResponse, ApiError> {
    let entry = st.with_session(|s| {
        s.set_flag(&key, body.value)?;
        Ok::<_, SessionError>(s.blackboard().global.remove(&key))
    })?;
    Ok(Json(json!({ "key": key, "entry": entry })))
}

async fn events(State(st): State<AppState>, ws: WebSocketUpgrade) -> impl IntoResponse {
    let rx = st.subscribe();
    ws.on_upgrade(move |socket| forward(socket, rx))
}

async fn forward(mut socket: WebSocket, mut rx: broadcast::Receiver<Arc<str>>) {
    loop {
        tokio::select! {
            msg = rx.recv() => {
                let text = match msg {
                    Ok(text) => text.to_string(),
                    Err(broadcast::error::RecvError::Lagged(skipped)) => json!({ "event": "lagged", "skipped": skipped }).to_string(),
                    Err(broadcast::error::RecvError::Closed) => break,
                };
                if socket.send(WsMessage::Text(text.into())).await.is_err() {
                    break;
                }
            }
            incoming = socket.recv() => match incoming {
                Some(Ok(WsMessage::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => {}
            },
        }
    }
}
