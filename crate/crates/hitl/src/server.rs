//! WebSocket front end: `GET /session` starts a session per connection,
//! `GET /health` reports liveness and the protocol version.

use std::future::Future;
use std::io;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use adapmen_core::training::GateMode;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use tokio::net::TcpListener;

use crate::log::SessionLog;
use crate::protocol::{ClientMessage, ErrorCode, ServerMessage, PROTOCOL_VERSION};
use crate::session::{Session, SessionConfig, SessionInput};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub session: SessionConfig,
    /// Pause between automatic steps.
    pub step_delay: Duration,
    /// How long to wait for an expert answer before the learner acts instead.
    /// `None` waits indefinitely.
    pub response_timeout: Option<Duration>,
    /// Where `session-<id>.jsonl` logs go; `None` disables logging.
    pub log_dir: Option<PathBuf>,
}

struct AppState {
    config: ServerConfig,
    next_id: AtomicU64,
}

/// Per-connection overrides.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionQuery {
    pub seed: Option<u64>,
    pub mode: Option<GateMode>,
}

pub fn router(config: ServerConfig) -> Router {
    let state = Arc::new(AppState {
        config,
        next_id: AtomicU64::new(1),
    });
    Router::new()
        .route("/health", get(health))
        .route("/session", get(session_upgrade))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    config: ServerConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    axum::serve(listener, router(config))
        .tcp_nodelay(true)
        .with_graceful_shutdown(shutdown)
        .await
}

async fn health() -> impl IntoResponse {
    Json(serde_json::json!({ "status": "ok", "protocol_version": PROTOCOL_VERSION }))
}

async fn session_upgrade(
    ws: WebSocketUpgrade,
    State(state): State<Arc<AppState>>,
    Query(query): Query<SessionQuery>,
) -> impl IntoResponse {
    ws.on_upgrade(move |socket| run_session(socket, state, query))
}

async fn send(socket: &mut WebSocket, messages: &[ServerMessage]) -> bool {
    for m in messages {
        if socket.send(Message::Text(m.to_json())).await.is_err() {
            return false;
        }
    }
    true
}

async fn pause(delay: Duration) {
    if delay.is_zero() {
        tokio::task::yield_now().await
    } else {
        tokio::time::sleep(delay).await
    }
}

enum Incoming {
    Client(ClientMessage),
    Invalid(String),
    Ignore,
    Closed,
}

fn classify(msg: Option<Result<Message, axum::Error>>) -> Incoming {
    match msg {
        None | Some(Err(_)) | Some(Ok(Message::Close(_))) => Incoming::Closed,
        Some(Ok(Message::Text(text))) => match serde_json::from_str::<ClientMessage>(&text) {
            Ok(m) => Incoming::Client(m),
            Err(e) => Incoming::Invalid(e.to_string()),
        },
        Some(Ok(Message::Binary(_))) => Incoming::Invalid("binary frames are not supported".into()),
        Some(Ok(_)) => Incoming::Ignore,
    }
}

async fn run_session(mut socket: WebSocket, state: Arc<AppState>, query: SessionQuery) {
    let id = state.next_id.fetch_add(1, Ordering::Relaxed);
    let config = &state.config;
    let mut session_config = config.session.clone();
    if let Some(seed) = query.seed {
        session_config.seed = seed;
    }
    if let Some(mode) = query.mode {
        session_config.mode = mode;
    }
    let mut session = match Session::new(id, session_config) {
        Ok(s) => s,
        Err(e) => {
            send(&mut socket, &[ServerMessage::error(ErrorCode::Setup, e.to_string())]).await;
            return;
        }
    };
    let mut log = match &config.log_dir {
        Some(dir) => match SessionLog::create(&dir.join(format!("session-{id}.jsonl")), &session) {
            Ok(l) => Some(l),
            Err(e) => {
                let msg = format!("cannot open session log: {e}");
                send(&mut socket, &[ServerMessage::error(ErrorCode::Setup, msg)]).await;
                return;
            }
        },
        None => None,
    };
    if !send(&mut socket, &session.opening_messages()).await {
        return;
    }

    while !session.is_finished() {
        let input = if session.awaiting_action() {
            let msg = match (config.response_timeout, session.pending_intervention()) {
                (Some(t), true) => match tokio::time::timeout(t, socket.recv()).await {
                    Ok(m) => classify(m),
                    Err(_) => {
                        if !apply(&mut socket, &mut session, &mut log, SessionInput::Timeout).await {
                            return;
                        }
                        continue;
                    }
                },
                _ => classify(socket.recv().await),
            };
            msg
        } else {
            tokio::select! {
                biased;
                m = socket.recv() => classify(m),
                _ = pause(config.step_delay) => {
                    if !apply(&mut socket, &mut session, &mut log, SessionInput::Auto).await {
                        return;
                    }
                    continue;
                }
            }
        };
        let ok = match input {
            Incoming::Client(m) => {
                let input = session.input_for(m);
                apply(&mut socket, &mut session, &mut log, input).await
            }
            Incoming::Invalid(reason) => send(&mut socket, &[ServerMessage::error(ErrorCode::BadMessage, reason)]).await,
            Incoming::Ignore => true,
            Incoming::Closed => false,
        };
        if !ok {
            return;
        }
    }
    if let Some(log) = &mut log {
        // A log write failure should not tear down a finished session.
        let _ = log.finish(&session);
    }
    let _ = socket.send(Message::Close(None)).await;
}

/// Applies `input`, logs it and sends the resulting messages (or the
/// error). Returns false once the connection is gone.
async fn apply(
    socket: &mut WebSocket,
    session: &mut Session,
    log: &mut Option<SessionLog<std::io::LineWriter<std::fs::File>>>,
    input: SessionInput,
) -> bool {
    match session.apply(input) {
        Ok(applied) => {
            if let Some(l) = log {
                if let Err(e) = l.record(input, session) {
                    let msg = format!("session log write failed: {e}");
                    send(socket, &[ServerMessage::error(ErrorCode::Setup, msg)]).await;
                    return false;
                }
            }
            send(socket, &applied.messages).await
        }
        Err(e) => send(socket, &[e.to_message()]).await,
    }
}
