//! One interactive training session: an [`AdapMenRunner`] whose expert
//! actions come from a client, plus the messages each input produces.

use adapmen_core::envs::Layout;
use adapmen_core::mdp::{Policy, PolicyTable};
use adapmen_core::training::{
    AdapMenRunner, GateMode, IterationMetrics, StepError, StepInput, StepRecord, TrainConfig, TrainError,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::protocol::{ClientMessage, ErrorCode, ServerMessage, PROTOCOL_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub train: TrainConfig,
    pub seed: u64,
    pub mode: GateMode,
}

/// Everything that can change a session. This is what the log records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionInput {
    /// Execute the learner's action.
    Auto,
    /// Answer the pending intervention request.
    Expert { action: usize },
    /// Act during a human-gated takeover.
    Takeover { action: usize },
    /// The request went unanswered; the learner acts and nothing is stored.
    Timeout,
    SetTakeover { active: bool },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SessionError {
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("waiting for the expert's action")]
    AwaitingAction,
    #[error("takeover is only available in human-gated mode")]
    WrongMode,
}

impl SessionError {
    pub fn code(&self) -> ErrorCode {
        match self {
            SessionError::Step(StepError::Finished) => ErrorCode::Finished,
            SessionError::Step(StepError::IllegalAction { .. }) => ErrorCode::IllegalAction,
            SessionError::Step(StepError::NoPendingIntervention) => ErrorCode::NoPendingRequest,
            SessionError::Step(StepError::WrongMode) | SessionError::WrongMode => ErrorCode::WrongMode,
            SessionError::Step(StepError::InterventionPending) | SessionError::AwaitingAction => {
                ErrorCode::NoPendingRequest
            }
        }
    }

    pub fn to_message(&self) -> ServerMessage {
        ServerMessage::error(self.code(), self.to_string())
    }
}

/// Observable session state after each input; replay reproduces the
/// sequence exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub steps_done: usize,
    pub episodes: usize,
    /// `(h, state)` of the step awaiting execution.
    pub current: Option<(usize, usize)>,
    pub pending_intervention: bool,
    pub takeover: bool,
    pub p: f64,
    pub window_delta: f64,
    pub episode_return: f64,
    pub buffer_len: usize,
}

/// Result of one accepted input.
#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub messages: Vec<ServerMessage>,
    /// The executed step, if the input executed one.
    pub record: Option<StepRecord>,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: u64,
    config: SessionConfig,
    runner: AdapMenRunner,
    layout: Layout,
    takeover: bool,
}

impl Session {
    pub fn new(id: u64, config: SessionConfig) -> Result<Self, TrainError> {
        let runner = AdapMenRunner::new(&config.train, config.seed, config.mode)?;
        let layout = config.train.env.layout();
        Ok(Self {
            id,
            config,
            runner,
            layout,
            takeover: false,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn runner(&self) -> &AdapMenRunner {
        &self.runner
    }

    pub fn learner(&self) -> &PolicyTable {
        self.runner.learner()
    }

    pub fn metrics(&self) -> &[IterationMetrics] {
        self.runner.metrics()
    }

    pub fn is_finished(&self) -> bool {
        self.runner.is_finished()
    }

    pub fn takeover(&self) -> bool {
        self.takeover
    }

    /// The gate fired at the current step (adapmen-gated mode only).
    pub fn pending_intervention(&self) -> bool {
        self.runner.current().is_some_and(|c| c.intervene)
    }

    /// The session cannot advance without an action from the client.
    pub fn awaiting_action(&self) -> bool {
        !self.is_finished() && (self.pending_intervention() || self.takeover)
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        let cur = self.runner.current();
        SessionSnapshot {
            steps_done: self.runner.steps_done(),
            episodes: self.runner.episodes(),
            current: cur.map(|c| (c.h, c.state)),
            pending_intervention: self.pending_intervention(),
            takeover: self.takeover,
            p: self.runner.p(),
            window_delta: self.runner.window_delta(),
            episode_return: self.runner.episode_return(),
            buffer_len: self.runner.buffer().len(),
        }
    }

    /// Hex SHA-256 over the snapshot and the learner's probabilities.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&self.snapshot()).expect("snapshot serializes"));
        let learner = self.runner.learner();
        for s in 0..learner.num_states() {
            for &x in learner.row(s) {
                hasher.update(x.to_bits().to_le_bytes());
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn hello(&self) -> ServerMessage {
        let mdp = self.runner.mdp();
        ServerMessage::Hello {
            version: PROTOCOL_VERSION,
            session_id: self.id,
            mode: self.config.mode,
            seed: self.config.seed,
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            horizon: mdp.horizon(),
            total_steps: self.config.train.steps,
            update_interval: self.config.train.update_interval,
            layout: self.layout.clone().into(),
        }
    }

    /// `state_update` (and `intervention_request` when the gate fired) for
    /// the current step, or `session_end` once training is done.
    pub fn current_messages(&self) -> Vec<ServerMessage> {
        let Some(cur) = self.runner.current() else {
            return vec![ServerMessage::SessionEnd {
                steps: self.runner.steps_done(),
                episodes: self.runner.episodes(),
                final_metrics: self.runner.metrics().last().cloned(),
            }];
        };
        let step = self.runner.steps_done();
        let p = self.runner.p();
        let mut out = vec![ServerMessage::StateUpdate {
            step,
            h: cur.h,
            state: cur.state,
            position: self.layout.positions.get(cur.state).copied().flatten(),
            gap: cur.gap,
            p,
            pending_intervention: cur.intervene,
            takeover: self.takeover,
            episode: self.runner.episodes() + 1,
            episode_return: self.runner.episode_return(),
            buffer_len: self.runner.buffer().len(),
            window_delta: self.runner.window_delta(),
        }];
        if cur.intervene {
            out.push(ServerMessage::InterventionRequest {
                step,
                h: cur.h,
                state: cur.state,
                gap: cur.gap,
                p,
                legal_actions: (0..self.runner.mdp().num_actions()).collect(),
            });
        }
        out
    }

    /// `hello` followed by the first step's messages.
    pub fn opening_messages(&self) -> Vec<ServerMessage> {
        let mut out = vec![self.hello()];
        out.extend(self.current_messages());
        out
    }

    /// Maps a client message onto a session input.
    pub fn input_for(&self, msg: ClientMessage) -> SessionInput {
        match msg {
            ClientMessage::ActionSubmit { action } if self.takeover => SessionInput::Takeover { action },
            ClientMessage::ActionSubmit { action } => SessionInput::Expert { action },
            ClientMessage::TakeoverToggle { active } => SessionInput::SetTakeover { active },
        }
    }

    /// Applies one input. On error the session is unchanged.
    pub fn apply(&mut self, input: SessionInput) -> Result<Applied, SessionError> {
        let step_input = match input {
            SessionInput::SetTakeover { active } => {
                if self.config.mode != GateMode::HumanGated {
                    return Err(SessionError::WrongMode);
                }
                if self.is_finished() {
                    return Err(StepError::Finished.into());
                }
                self.takeover = active;
                return Ok(Applied {
                    messages: self.current_messages(),
                    record: None,
                });
            }
            SessionInput::Auto if self.takeover => return Err(SessionError::AwaitingAction),
            SessionInput::Auto => StepInput::Auto,
            SessionInput::Expert { action } => StepInput::Expert(action),
            SessionInput::Takeover { .. } if !self.takeover => {
                return Err(StepError::NoPendingIntervention.into())
            }
            SessionInput::Takeover { action } => StepInput::Takeover(action),
            SessionInput::Timeout => StepInput::TimeoutFallback,
        };
        let outcome = self.runner.step(step_input)?;
        let mut messages = Vec::new();
        if let Some(episode_return) = outcome.episode_end {
            messages.push(ServerMessage::EpisodeEnd {
                episode: self.runner.episodes(),
                episode_return,
            });
        }
        if let Some(metrics) = outcome.iteration {
            messages.push(ServerMessage::MetricsUpdate { metrics });
        }
        messages.extend(self.current_messages());
        Ok(Applied {
            messages,
            record: Some(outcome.record),
        })
    }

    /// The input a perfect expert would give now, if one is needed.
    pub fn expert_input(&self) -> Option<SessionInput> {
        let cur = self.runner.current()?;
        Some(if self.takeover {
            SessionInput::Takeover {
                action: cur.expert_action,
            }
        } else if cur.intervene {
            SessionInput::Expert {
                action: cur.expert_action,
            }
        } else {
            SessionInput::Auto
        })
    }
}
