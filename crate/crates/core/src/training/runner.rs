//! Step-at-a-time AdapMen loop.
//!
//! [`AdapMenRunner`] owns the whole training state and advances one
//! environment step per call, so the same code drives headless training and
//! interactive sessions where a person supplies the expert actions.

use thiserror::Error;

use super::buffer::{InterventionBuffer, Sample};
use super::learner::Learner;
use super::rollout::StepRecord;
use super::{streams, IterationMetrics, RunResult, TrainConfig, TrainError};
use crate::gating::{init_p, should_intervene, AdaptiveThreshold, Gate};
use crate::mdp::{policy_value, value_iteration_finite, GreedyPolicy, PolicyTable, QTable, TabularMdp};
use crate::rng::SeededRng;

/// Who decides when the expert acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// The intervention criterion decides.
    AdapmenGated,
    /// The expert takes over whenever they choose; the criterion is only
    /// displayed.
    HumanGated,
}

/// How the pending step should be executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepInput {
    /// Execute the learner's sampled action; only valid without a pending
    /// intervention.
    Auto,
    /// Execute and store an expert action for the pending intervention.
    Expert(usize),
    /// Human-gated takeover: execute and store this action.
    Takeover(usize),
    /// The expert did not answer in time: execute the learner's action and
    /// store nothing.
    TimeoutFallback,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StepError {
    #[error("training finished")]
    Finished,
    #[error("an intervention is pending; an expert action is required")]
    InterventionPending,
    #[error("no intervention is pending")]
    NoPendingIntervention,
    #[error("illegal action {action} (have {num_actions} actions)")]
    IllegalAction { action: usize, num_actions: usize },
    #[error("takeover is only available in human-gated mode")]
    WrongMode,
}

/// The step about to be executed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prepared {
    pub h: usize,
    pub state: usize,
    pub learner_action: usize,
    /// What the (exact) expert would do here.
    pub expert_action: usize,
    pub gap: f64,
    /// The gate fired; an expert action is required.
    pub intervene: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub record: StepRecord,
    /// Return of the episode this step completed.
    pub episode_end: Option<f64>,
    /// Metrics of the refit this step triggered.
    pub iteration: Option<IterationMetrics>,
}

/// Exact quantities shared by every algorithm.
#[derive(Debug, Clone)]
pub(crate) struct Setup {
    pub mdp: TabularMdp,
    pub q_star: QTable,
    pub pi_star: GreedyPolicy,
    pub j_star: f64,
}

impl Setup {
    pub fn new(config: &TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let mdp = config.env.build()?;
        let (q_star, pi_star) = value_iteration_finite(&mdp);
        let j_star = policy_value(&mdp, &pi_star);
        Ok(Self {
            mdp,
            q_star,
            pi_star,
            j_star,
        })
    }
}

/// `δ̂`: fraction of intervened steps.
pub fn estimate_delta(steps: &[StepRecord]) -> Result<f64, TrainError> {
    if steps.is_empty() {
        return Err(TrainError::EmptyWindow);
    }
    Ok(steps.iter().filter(|s| s.intervened).count() as f64 / steps.len() as f64)
}

#[derive(Debug, Clone)]
pub struct AdapMenRunner {
    setup: Setup,
    config: TrainConfig,
    mode: GateMode,
    gate: Gate,
    learner: Learner,
    buffer: InterventionBuffer,
    threshold: AdaptiveThreshold,
    env_rng: SeededRng,
    action_rng: SeededRng,
    fit_rng: SeededRng,
    steps_done: usize,
    episodes: usize,
    episode_return: f64,
    window_steps: usize,
    window_interventions: usize,
    warmup_gaps: Vec<f64>,
    current: Option<Prepared>,
    metrics: Vec<IterationMetrics>,
}

impl AdapMenRunner {
    pub fn new(config: &TrainConfig, seed: u64, mode: GateMode) -> Result<Self, TrainError> {
        let setup = Setup::new(config)?;
        let gate_q = if config.q_noise > 0.0 {
            let mut rng = SeededRng::new(SeededRng::derive_seed(seed, streams::Q_NOISE));
            let scale = config.q_noise;
            setup.q_star.map(|_, _, _, v| v + scale * (2.0 * rng.next_f64() - 1.0))
        } else {
            setup.q_star.clone()
        };
        let gate = Gate::new(config.criterion.kind, gate_q, setup.pi_star.clone());
        let (ns, na) = (setup.mdp.num_states(), setup.mdp.num_actions());
        let mut runner = Self {
            gate,
            learner: Learner::new(config.learner.clone(), ns, na),
            buffer: InterventionBuffer::new(config.buffer_capacity),
            threshold: AdaptiveThreshold::new(config.criterion.p)
                .map_err(|e| TrainError::config("criterion.p", e.to_string()))?,
            env_rng: SeededRng::new(SeededRng::derive_seed(seed, streams::ENV)),
            action_rng: SeededRng::new(SeededRng::derive_seed(seed, streams::ACTION)),
            fit_rng: SeededRng::new(SeededRng::derive_seed(seed, streams::FIT)),
            steps_done: 0,
            episodes: 0,
            episode_return: 0.0,
            window_steps: 0,
            window_interventions: 0,
            warmup_gaps: Vec::new(),
            current: None,
            metrics: Vec::new(),
            setup,
            config: config.clone(),
            mode,
        };
        if runner.config.steps > 0 {
            runner.prepare(1, None);
        }
        Ok(runner)
    }

    fn in_warmup(&self) -> bool {
        self.config.criterion.adaptive && self.steps_done < self.config.criterion.warmup_steps
    }

    /// Threshold used by the gate right now (0 during warmup).
    pub fn p(&self) -> f64 {
        if self.in_warmup() {
            0.0
        } else {
            self.threshold.p()
        }
    }

    pub fn mode(&self) -> GateMode {
        self.mode
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.setup.mdp
    }

    pub fn q_star(&self) -> &QTable {
        &self.setup.q_star
    }

    pub fn pi_star(&self) -> &GreedyPolicy {
        &self.setup.pi_star
    }

    pub fn gate(&self) -> &Gate {
        &self.gate
    }

    pub fn learner(&self) -> &PolicyTable {
        self.learner.policy()
    }

    pub fn buffer(&self) -> &InterventionBuffer {
        &self.buffer
    }

    pub fn metrics(&self) -> &[IterationMetrics] {
        &self.metrics
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    pub fn episode_return(&self) -> f64 {
        self.episode_return
    }

    /// Fraction of intervened steps in the current (unfinished) window.
    pub fn window_delta(&self) -> f64 {
        if self.window_steps == 0 {
            0.0
        } else {
            self.window_interventions as f64 / self.window_steps as f64
        }
    }

    pub fn is_finished(&self) -> bool {
        self.current.is_none()
    }

    /// The step awaiting execution; `None` once all `N` steps are done.
    pub fn current(&self) -> Option<&Prepared> {
        self.current.as_ref()
    }

    fn prepare(&mut self, h: usize, state: Option<usize>) {
        let state = state.unwrap_or_else(|| self.env_rng.categorical(self.setup.mdp.initial()));
        let row = self.learner.policy().row(state);
        let learner_action = self.action_rng.categorical(row);
        let gap = self.gate.gap(row, state, h);
        let intervene = self.mode == GateMode::AdapmenGated && should_intervene(self.p(), gap);
        self.current = Some(Prepared {
            h,
            state,
            learner_action,
            expert_action: self.setup.pi_star.action(h, state),
            gap,
            intervene,
        });
    }

    /// Executes the pending step.
    pub fn step(&mut self, input: StepInput) -> Result<StepOutcome, StepError> {
        let cur = self.current.ok_or(StepError::Finished)?;
        let na = self.setup.mdp.num_actions();
        let check = |a: usize| {
            if a < na {
                Ok(a)
            } else {
                Err(StepError::IllegalAction {
                    action: a,
                    num_actions: na,
                })
            }
        };
        let (executed, stored) = match input {
            StepInput::Auto if cur.intervene => return Err(StepError::InterventionPending),
            StepInput::Auto => (cur.learner_action, None),
            StepInput::Expert(_) if !cur.intervene => return Err(StepError::NoPendingIntervention),
            StepInput::Expert(a) => (check(a)?, Some(a)),
            StepInput::Takeover(_) if self.mode != GateMode::HumanGated => return Err(StepError::WrongMode),
            StepInput::Takeover(a) => (check(a)?, Some(a)),
            StepInput::TimeoutFallback if !cur.intervene => return Err(StepError::NoPendingIntervention),
            StepInput::TimeoutFallback => (cur.learner_action, None),
        };
        let intervened = stored.is_some();
        if let Some(action) = stored {
            self.buffer.push(Sample {
                state: cur.state,
                action,
                h: cur.h,
            });
        }
        let reward = self.setup.mdp.reward(cur.state, executed);
        let next = self.env_rng.categorical(self.setup.mdp.transition_row(cur.state, executed));
        let record = StepRecord {
            h: cur.h,
            state: cur.state,
            learner_action: cur.learner_action,
            expert_action: stored,
            gap: cur.gap,
            intervened,
            executed_action: executed,
            reward,
        };

        self.episode_return += reward;
        if self.in_warmup() {
            self.warmup_gaps.push(cur.gap);
        }
        self.steps_done += 1;
        self.window_steps += 1;
        self.window_interventions += usize::from(intervened);

        let mut episode_end = None;
        if cur.h == self.setup.mdp.horizon() {
            self.episodes += 1;
            episode_end = Some(self.episode_return);
            self.episode_return = 0.0;
        }

        let iteration = self.after_step();

        if self.steps_done < self.config.steps {
            if episode_end.is_some() {
                self.prepare(1, None);
            } else {
                self.prepare(cur.h + 1, Some(next));
            }
        } else {
            self.current = None;
        }
        Ok(StepOutcome {
            record,
            episode_end,
            iteration,
        })
    }

    /// Refit, warmup hand-off and threshold update after a step.
    fn after_step(&mut self) -> Option<IterationMetrics> {
        let n = self.steps_done;
        let horizon = self.setup.mdp.horizon();
        let boundary = n % self.config.update_interval == 0 || n == self.config.steps;
        let mut epsb = None;
        if boundary {
            self.learner.fit(&self.buffer, &mut self.fit_rng);
            epsb = Some(self.learner.estimate_epsb(&self.buffer).unwrap_or(0.0));
        }
        let criterion = &self.config.criterion;
        if criterion.adaptive && criterion.warmup_steps > 0 && n == criterion.warmup_steps {
            let loss = self.learner.estimate_epsb(&self.buffer).unwrap_or(0.0);
            let p = init_p(&self.warmup_gaps, loss, horizon).expect("warmup window is non-empty");
            self.threshold.set(p);
            self.warmup_gaps = Vec::new();
        }
        let epsb = epsb?;
        let delta = self.window_interventions as f64 / self.window_steps as f64;
        if criterion.adaptive && n > criterion.warmup_steps {
            self.threshold.observe(delta, epsb, self.window_steps, horizon);
        }
        let metrics = self.iteration_metrics(delta, epsb);
        self.metrics.push(metrics.clone());
        self.window_steps = 0;
        self.window_interventions = 0;
        Some(metrics)
    }

    fn iteration_metrics(&self, delta: f64, epsb: f64) -> IterationMetrics {
        let mdp = &self.setup.mdp;
        let learner = self.learner.policy();
        let p = self.p();
        let j_learner = policy_value(mdp, learner);
        let j_teacher = match self.mode {
            GateMode::AdapmenGated => policy_value(mdp, &self.gate.teacher_policy(learner, p)),
            GateMode::HumanGated => j_learner,
        };
        IterationMetrics {
            iteration: self.metrics.len() + 1,
            env_steps: self.steps_done,
            episodes: self.episodes,
            delta_estimate: delta,
            epsb_estimate: epsb,
            p,
            j_learner,
            j_teacher,
            j_expert: self.setup.j_star,
            suboptimality_gap: self.setup.j_star - j_learner,
            teacher_gap: self.setup.j_star - j_teacher,
            expert_action_usage: self.buffer.total_added(),
            buffer_len: self.buffer.len(),
        }
    }

    pub fn into_result(self, steps: Vec<StepRecord>) -> RunResult {
        RunResult {
            metrics: self.metrics,
            learner: self.learner.policy().clone(),
            buffer: self.buffer,
            steps,
        }
    }
}

/// Headless AdapMen: the exact expert answers every intervention.
pub fn train_adapmen(config: &TrainConfig, seed: u64, record_steps: bool) -> Result<RunResult, TrainError> {
    let mut runner = AdapMenRunner::new(config, seed, GateMode::AdapmenGated)?;
    let mut steps = Vec::new();
    while let Some(cur) = runner.current().copied() {
        let input = if cur.intervene {
            StepInput::Expert(cur.expert_action)
        } else {
            StepInput::Auto
        };
        let outcome = runner.step(input).expect("headless input matches the gate");
        if record_steps {
            steps.push(outcome.record);
        }
    }
    Ok(runner.into_result(steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvSpec;
    use crate::gating::{CriterionKind, InterventionCriterion};
    use crate::training::{Algorithm, LearnerConfig};

    fn config(steps: usize, adaptive: bool) -> TrainConfig {
        TrainConfig {
            env: EnvSpec::Cliffwalk {
                width: 5,
                horizon: 10,
                slip: 0.0,
            },
            algorithm: Algorithm::Adapmen,
            criterion: InterventionCriterion {
                kind: CriterionKind::QDiff,
                p: 0.0,
                adaptive,
                warmup_steps: 0,
            },
            learner: LearnerConfig::default(),
            steps,
            update_interval: 50,
            buffer_capacity: None,
            q_noise: 0.0,
        }
    }

    #[test]
    fn zero_steps_gives_no_metrics() {
        let out = train_adapmen(&config(0, true), 1, false).unwrap();
        assert!(out.metrics.is_empty());
    }

    #[test]
    fn fixed_zero_threshold_stores_every_positive_gap() {
        let out = train_adapmen(&config(500, false), 4, true).unwrap();
        let positive = out.steps.iter().filter(|s| s.gap > 0.0).count();
        assert_eq!(out.buffer.total_added(), positive);
        for (i, m) in out.metrics.iter().enumerate() {
            let window = &out.steps[i * 50..(i + 1) * 50];
            let frac = window.iter().filter(|s| s.gap > 0.0).count() as f64 / 50.0;
            assert_eq!(m.delta_estimate, frac);
            assert_eq!(m.p, 0.0);
            assert!((m.teacher_gap).abs() < 1e-12);
        }
    }

    #[test]
    fn runner_rejects_mismatched_inputs() {
        let mut runner = AdapMenRunner::new(&config(100, false), 0, GateMode::AdapmenGated).unwrap();
        let cur = *runner.current().unwrap();
        assert!(cur.intervene);
        assert_eq!(runner.step(StepInput::Auto), Err(StepError::InterventionPending));
        assert_eq!(runner.step(StepInput::Takeover(0)), Err(StepError::WrongMode));
        assert_eq!(
            runner.step(StepInput::Expert(7)),
            Err(StepError::IllegalAction { action: 7, num_actions: 3 })
        );
        assert_eq!(runner.current(), Some(&cur));
        runner.step(StepInput::Expert(0)).unwrap();
        assert_eq!(runner.buffer().len(), 1);
    }

    #[test]
    fn partial_final_window_is_recorded() {
        let out = train_adapmen(&config(120, true), 0, false).unwrap();
        let steps: Vec<usize> = out.metrics.iter().map(|m| m.env_steps).collect();
        assert_eq!(steps, vec![50, 100, 120]);
    }
}
