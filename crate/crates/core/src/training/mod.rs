//! The intervention-gated training loop and its BC / DAgger baselines.

mod baselines;
mod buffer;
mod learner;
mod rollout;
mod runner;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::{EnvError, EnvSpec};
use crate::gating::InterventionCriterion;

pub use baselines::{train_bc, train_dagger};
pub use buffer::{InterventionBuffer, Sample};
pub use learner::{fit_eg_step, fit_mle, EpsbEstimator, Learner, LearnerConfig, LearnerKind};
pub use rollout::{rollout_episode, teacher_step, RolloutTrace, StepRecord, TeacherDecision};
pub use runner::{
    estimate_delta, train_adapmen, AdapMenRunner, GateMode, Prepared, StepError, StepInput, StepOutcome,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("invalid loss vector: {0}")]
    LossVector(String),
    #[error("empty estimation window")]
    EmptyWindow,
    #[error(transparent)]
    Env(#[from] EnvError),
}

impl TrainError {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        TrainError::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Adapmen,
    Bc,
    Dagger,
}

/// One training run, minus the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub env: EnvSpec,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub criterion: InterventionCriterion,
    #[serde(default)]
    pub learner: LearnerConfig,
    /// Total environment steps `N`.
    pub steps: usize,
    /// Learner refit interval `K`.
    #[serde(default = "default_update_interval")]
    pub update_interval: usize,
    #[serde(default)]
    pub buffer_capacity: Option<usize>,
    /// Half-width of the uniform noise added to every `Q*` entry the gate
    /// sees. The expert's actions are unaffected.
    #[serde(default)]
    pub q_noise: f64,
}

fn default_algorithm() -> Algorithm {
    Algorithm::Adapmen
}
fn default_update_interval() -> usize {
    200
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.update_interval == 0 {
            return Err(TrainError::config("update_interval", "must be positive"));
        }
        let p = self.criterion.p;
        if !(p.is_finite() && p >= 0.0) {
            return Err(TrainError::config("criterion.p", "must be finite and non-negative"));
        }
        if !(self.q_noise.is_finite() && self.q_noise >= 0.0) {
            return Err(TrainError::config("q_noise", "must be finite and non-negative"));
        }
        self.learner.validate()
    }
}

/// Everything recorded at one refit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub env_steps: usize,
    pub episodes: usize,
    /// Fraction of steps in the last window where the expert acted.
    pub delta_estimate: f64,
    /// Mean learner loss over the buffer after the refit.
    pub epsb_estimate: f64,
    /// Threshold in force for the next window.
    pub p: f64,
    pub j_learner: f64,
    pub j_teacher: f64,
    pub j_expert: f64,
    pub suboptimality_gap: f64,
    pub teacher_gap: f64,
    /// Cumulative expert labels added to the buffer.
    pub expert_action_usage: usize,
    pub buffer_len: usize,
}

/// Output of one training run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub metrics: Vec<IterationMetrics>,
    pub learner: crate::mdp::PolicyTable,
    pub buffer: InterventionBuffer,
    /// Per-step records, kept only when requested.
    pub steps: Vec<StepRecord>,
}

/// Runs whichever algorithm `config` names.
pub fn train(config: &TrainConfig, seed: u64, record_steps: bool) -> Result<RunResult, TrainError> {
    match config.algorithm {
        Algorithm::Adapmen => train_adapmen(config, seed, record_steps),
        Algorithm::Bc => train_bc(config, seed, record_steps),
        Algorithm::Dagger => train_dagger(config, seed, record_steps),
    }
}

/// Independent RNG streams of one run.
pub(crate) mod streams {
    pub const ENV: u64 = 1;
    pub const ACTION: u64 = 2;
    pub const FIT: u64 = 3;
    pub const Q_NOISE: u64 = 4;
}
