use std::path::PathBuf;
use std::time::Duration;

use adapmen_core::envs::EnvSpec;
use adapmen_core::gating::{CriterionKind, InterventionCriterion};
use adapmen_core::mdp::value_iteration_finite;
use adapmen_core::training::{train_adapmen, Algorithm, GateMode, IterationMetrics, LearnerConfig, TrainConfig};
use adapmen_hitl::{replay, serve, ErrorCode, ServerConfig, ServerMessage, SessionConfig, PROTOCOL_VERSION};
use futures_util::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async_with_config, MaybeTlsStream, WebSocketStream};

type Client = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn train_config() -> TrainConfig {
    TrainConfig {
        env: EnvSpec::Cliffwalk {
            width: 5,
            horizon: 8,
            slip: 0.0,
        },
        algorithm: Algorithm::Adapmen,
        criterion: InterventionCriterion {
            kind: CriterionKind::QDiff,
            p: 0.0,
            adaptive: true,
            warmup_steps: 200,
        },
        learner: LearnerConfig::default(),
        steps: 1200,
        update_interval: 200,
        buffer_capacity: None,
        q_noise: 0.0,
    }
}

async fn start(response_timeout: Option<Duration>, log_dir: Option<PathBuf>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let config = ServerConfig {
        session: SessionConfig {
            train: train_config(),
            seed: 5,
            mode: GateMode::AdapmenGated,
        },
        step_delay: Duration::ZERO,
        response_timeout,
        log_dir,
    };
    tokio::spawn(serve(listener, config, std::future::pending()));
    addr.to_string()
}

async fn connect(url: String) -> Client {
    connect_async_with_config(url, None, true).await.unwrap().0
}

async fn next(ws: &mut Client) -> Option<ServerMessage> {
    loop {
        match ws.next().await? {
            Ok(Message::Text(t)) => return Some(serde_json::from_str(&t).expect("schema-valid server message")),
            Ok(Message::Close(_)) | Err(_) => return None,
            Ok(_) => continue,
        }
    }
}

async fn submit(ws: &mut Client, action: usize) {
    let text = format!(r#"{{"type":"action_submit","action":{action}}}"#);
    ws.send(Message::Text(text)).await.unwrap();
}

/// Plays a perfect expert until the session ends; returns the streamed
/// metrics and the final `session_end` metrics.
async fn play_perfect(ws: &mut Client) -> (Vec<IterationMetrics>, Option<IterationMetrics>) {
    let (_, pi_star) = value_iteration_finite(&train_config().env.build().unwrap());
    let mut metrics = Vec::new();
    while let Some(msg) = next(ws).await {
        match msg {
            ServerMessage::InterventionRequest { h, state, legal_actions, .. } => {
                assert_eq!(legal_actions, vec![0, 1, 2]);
                submit(ws, pi_star.action(h, state)).await;
            }
            ServerMessage::MetricsUpdate { metrics: m } => metrics.push(m),
            ServerMessage::SessionEnd { final_metrics, steps, .. } => {
                assert_eq!(steps, 1200);
                return (metrics, final_metrics);
            }
            ServerMessage::Error { code, message } => panic!("{code:?}: {message}"),
            _ => {}
        }
    }
    panic!("connection closed before session_end");
}

#[tokio::test]
async fn scripted_expert_matches_headless_run() {
    let dir = tempfile::tempdir().unwrap();
    let addr = start(None, Some(dir.path().to_owned())).await;
    let mut ws = connect(format!("ws://{addr}/session")).await;
    match next(&mut ws).await.unwrap() {
        ServerMessage::Hello {
            version,
            seed,
            num_actions,
            layout,
            ..
        } => {
            assert_eq!(version, PROTOCOL_VERSION);
            assert_eq!(seed, 5);
            assert_eq!(num_actions, 3);
            assert_eq!(layout.positions.len(), 6);
        }
        other => panic!("expected hello, got {other:?}"),
    }
    let (streamed, last) = play_perfect(&mut ws).await;
    let headless = train_adapmen(&train_config(), 5, false).unwrap();
    assert_eq!(streamed, headless.metrics);
    assert_eq!(last.as_ref(), headless.metrics.last());

    // The log is complete once the server has closed the connection.
    assert!(next(&mut ws).await.is_none());
    let path = dir.path().join("session-1.jsonl");
    let r = replay(std::io::BufReader::new(std::fs::File::open(path).unwrap())).unwrap();
    assert!(r.complete);
    assert_eq!(r.session.learner(), &headless.learner);
}

#[tokio::test]
async fn query_overrides_seed() {
    let addr = start(None, None).await;
    let mut ws = connect(format!("ws://{addr}/session?seed=9")).await;
    assert!(matches!(next(&mut ws).await, Some(ServerMessage::Hello { seed: 9, .. })));
    let (streamed, _) = play_perfect(&mut ws).await;
    assert_eq!(streamed, train_adapmen(&train_config(), 9, false).unwrap().metrics);
}

#[tokio::test]
async fn bad_input_gets_an_error_and_the_request_stays_open() {
    let addr = start(None, None).await;
    let mut ws = connect(format!("ws://{addr}/session")).await;
    // Warmup runs with p = 0, so the untrained learner triggers a request
    // at the first step.
    let request = loop {
        match next(&mut ws).await.unwrap() {
            ServerMessage::InterventionRequest { step, .. } => break step,
            _ => continue,
        }
    };
    submit(&mut ws, 7).await;
    assert!(matches!(
        next(&mut ws).await,
        Some(ServerMessage::Error {
            code: ErrorCode::IllegalAction,
            ..
        })
    ));
    ws.send(Message::Text("{\"type\":\"jump\"}".into())).await.unwrap();
    assert!(matches!(
        next(&mut ws).await,
        Some(ServerMessage::Error {
            code: ErrorCode::BadMessage,
            ..
        })
    ));
    ws.send(Message::Text(r#"{"type":"takeover_toggle","active":true}"#.into())).await.unwrap();
    assert!(matches!(
        next(&mut ws).await,
        Some(ServerMessage::Error {
            code: ErrorCode::WrongMode,
            ..
        })
    ));
    submit(&mut ws, 0).await;
    match next(&mut ws).await.unwrap() {
        ServerMessage::StateUpdate { step, .. } => assert_eq!(step, request + 1),
        other => panic!("expected state_update, got {other:?}"),
    }
}

#[tokio::test]
async fn unanswered_requests_time_out_to_the_learner() {
    let addr = start(Some(Duration::from_millis(1)), None).await;
    let mut ws = connect(format!("ws://{addr}/session")).await;
    let mut requests = 0;
    let final_metrics = loop {
        match next(&mut ws).await.unwrap() {
            ServerMessage::InterventionRequest { .. } => requests += 1,
            ServerMessage::SessionEnd { final_metrics, .. } => break final_metrics.unwrap(),
            _ => {}
        }
    };
    assert!(requests > 0);
    assert_eq!(final_metrics.expert_action_usage, 0);
}

#[tokio::test]
async fn health_reports_protocol_version() {
    let addr = start(None, None).await;
    let mut stream = TcpStream::connect(&addr).await.unwrap();
    stream
        .write_all(b"GET /health HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).await.unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    let body = response.split("\r\n\r\n").nth(1).unwrap();
    let json: serde_json::Value = serde_json::from_str(body).unwrap();
    assert_eq!(json["status"], "ok");
    assert_eq!(json["protocol_version"], PROTOCOL_VERSION);
}
