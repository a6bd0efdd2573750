//! Wire messages. Every message is one JSON text frame with a `type` tag.

use adapmen_core::envs::Layout;
use adapmen_core::training::{GateMode, IterationMetrics};
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutView {
    pub rows: usize,
    pub cols: usize,
    pub positions: Vec<Option<[usize; 2]>>,
    pub action_names: Vec<String>,
}

impl From<Layout> for LayoutView {
    fn from(l: Layout) -> Self {
        Self {
            rows: l.rows,
            cols: l.cols,
            positions: l.positions,
            action_names: l.action_names,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// The frame was not a valid client message.
    BadMessage,
    IllegalAction,
    /// `action_submit` with no intervention request or takeover outstanding.
    NoPendingRequest,
    /// Takeover was toggled outside human-gated mode.
    WrongMode,
    /// The session has run all its steps.
    Finished,
    /// The session could not be created.
    Setup,
}

/// Server to client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        version: u32,
        session_id: u64,
        mode: GateMode,
        seed: u64,
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        total_steps: usize,
        update_interval: usize,
        layout: LayoutView,
    },
    /// The step about to be executed.
    StateUpdate {
        step: usize,
        h: usize,
        state: usize,
        position: Option<[usize; 2]>,
        gap: f64,
        p: f64,
        pending_intervention: bool,
        takeover: bool,
        episode: usize,
        episode_return: f64,
        buffer_len: usize,
        window_delta: f64,
    },
    /// The gate fired at the current step; the session waits for
    /// `action_submit`.
    InterventionRequest {
        step: usize,
        h: usize,
        state: usize,
        gap: f64,
        p: f64,
        legal_actions: Vec<usize>,
    },
    MetricsUpdate {
        metrics: IterationMetrics,
    },
    EpisodeEnd {
        episode: usize,
        episode_return: f64,
    },
    SessionEnd {
        steps: usize,
        episodes: usize,
        final_metrics: Option<IterationMetrics>,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
}

/// Client to server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    ActionSubmit { action: usize },
    TakeoverToggle { active: bool },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        ServerMessage::Error {
            code,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("messages always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_messages_parse() {
        let m: ClientMessage = serde_json::from_str(r#"{"type":"action_submit","action":2}"#).unwrap();
        assert_eq!(m, ClientMessage::ActionSubmit { action: 2 });
        let m: ClientMessage = serde_json::from_str(r#"{"type":"takeover_toggle","active":true}"#).unwrap();
        assert_eq!(m, ClientMessage::TakeoverToggle { active: true });
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"action_submit","action":-1}"#).is_err());
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"action_submit","action":1,"x":0}"#).is_err());
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"hello"}"#).is_err());
    }

    #[test]
    fn server_messages_round_trip() {
        let m = ServerMessage::InterventionRequest {
            step: 3,
            h: 4,
            state: 1,
            gap: 2.5,
            p: 0.25,
            legal_actions: vec![0, 1, 2],
        };
        let text = m.to_json();
        assert!(text.starts_with(r#"{"type":"intervention_request","#));
        assert_eq!(serde_json::from_str::<ServerMessage>(&text).unwrap(), m);
        let e = ServerMessage::error(ErrorCode::IllegalAction, "nope").to_json();
        assert_eq!(e, r#"{"type":"error","code":"illegal_action","message":"nope"}"#);
    }
}
