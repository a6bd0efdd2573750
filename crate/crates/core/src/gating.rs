//! Intervention criteria: when the expert takes over from the learner.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{kl_divergence, tv_divergence, GreedyPolicy, Policy, PolicyTable, QTable, TimedPolicy};

#[derive(Debug, Error, PartialEq)]
pub enum GatingError {
    #[error("empty warmup window")]
    EmptyWindow,
    #[error("threshold must be finite and non-negative, got {0}")]
    BadThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    /// `Q*_h(s, π*) - Q*_h(s, π)`.
    QDiff,
    /// `TV(π*(s), π(s)) · (H - h + 1)`.
    TvSurrogate,
    /// `sqrt(KL(π*(s) ‖ π(s))) · (H - h + 1)`.
    SqrtKlSurrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionCriterion {
    pub kind: CriterionKind,
    /// Initial threshold; replaced after warmup and refits when adaptive.
    #[serde(default)]
    pub p: f64,
    #[serde(default = "default_true")]
    pub adaptive: bool,
    #[serde(default)]
    pub warmup_steps: usize,
}

fn default_true() -> bool {
    true
}

impl Default for InterventionCriterion {
    fn default() -> Self {
        Self {
            kind: CriterionKind::QDiff,
            p: 0.0,
            adaptive: true,
            warmup_steps: 0,
        }
    }
}

/// Strict gate: intervene iff `gap > p`.
pub fn should_intervene(p: f64, gap: f64) -> bool {
    gap > p
}

/// `Q*_h(s, π*) - Σ_a π(a|s) Q*_h(s, a)`, accumulated as a sum of
/// non-negative terms so it is never negative when `π*` is greedy for `q`.
pub fn dq_gap(q_star: &QTable, pi_star: &GreedyPolicy, learner: &[f64], s: usize, h: usize) -> f64 {
    let row = q_star.row(h, s);
    let best = row[pi_star.action(h, s)];
    row.iter().zip(learner).map(|(q, p)| p * (best - q)).sum()
}

fn remaining(h: usize, horizon: usize) -> f64 {
    (horizon - h + 1) as f64
}

pub fn surrogate_gap_tv(pi_star: &GreedyPolicy, learner: &[f64], s: usize, h: usize, horizon: usize) -> f64 {
    tv_divergence(pi_star.probs(h, s), learner).expect("policy widths agree") * remaining(h, horizon)
}

/// `+inf` when the learner gives the expert action zero probability.
pub fn surrogate_gap_sqrt_kl(pi_star: &GreedyPolicy, learner: &[f64], s: usize, h: usize, horizon: usize) -> f64 {
    let kl = kl_divergence(pi_star.probs(h, s), learner).expect("policy widths agree");
    kl.sqrt() * remaining(h, horizon)
}

/// Everything needed to evaluate the gate at `(s, h)`.
#[derive(Debug, Clone)]
pub struct Gate {
    pub kind: CriterionKind,
    /// Q table seen by the gate; the true `Q*` unless noise is injected.
    pub q: QTable,
    pub pi_star: GreedyPolicy,
}

impl Gate {
    pub fn new(kind: CriterionKind, q: QTable, pi_star: GreedyPolicy) -> Self {
        Self { kind, q, pi_star }
    }

    pub fn horizon(&self) -> usize {
        self.q.horizon()
    }

    pub fn gap(&self, learner: &[f64], s: usize, h: usize) -> f64 {
        match self.kind {
            CriterionKind::QDiff => dq_gap(&self.q, &self.pi_star, learner, s, h),
            CriterionKind::TvSurrogate => surrogate_gap_tv(&self.pi_star, learner, s, h, self.horizon()),
            CriterionKind::SqrtKlSurrogate => surrogate_gap_sqrt_kl(&self.pi_star, learner, s, h, self.horizon()),
        }
    }

    /// Gate indicator for every `(h, s)`, `fires[(h - 1) * S + s]`.
    pub fn firing_table(&self, learner: &PolicyTable, p: f64) -> Vec<bool> {
        let ns = learner.num_states();
        let mut fires = Vec::with_capacity(self.horizon() * ns);
        for h in 1..=self.horizon() {
            for s in 0..ns {
                fires.push(should_intervene(p, self.gap(learner.row(s), s, h)));
            }
        }
        fires
    }

    /// The switching teacher π′: the expert's action where the gate fires,
    /// the learner's distribution elsewhere.
    pub fn teacher_policy(&self, learner: &PolicyTable, p: f64) -> TimedPolicy {
        let ns = learner.num_states();
        let fires = self.firing_table(learner, p);
        TimedPolicy::from_fn(self.horizon(), ns, learner.num_actions(), |h, s| {
            if fires[(h - 1) * ns + s] {
                self.pi_star.probs(h, s).to_vec()
            } else {
                learner.row(s).to_vec()
            }
        })
    }
}

/// Statistics from the last training window that drive the threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveState {
    pub last_delta_estimate: f64,
    pub last_epsb_estimate: f64,
    pub steps_observed: usize,
}

/// `p = δ̂ · ε̂_b · H`.
pub fn update_p(state: &AdaptiveState, horizon: usize) -> f64 {
    state.last_delta_estimate * state.last_epsb_estimate * horizon as f64
}

/// Threshold owned by a training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveThreshold {
    p: f64,
    pub state: AdaptiveState,
}

impl AdaptiveThreshold {
    pub fn new(p: f64) -> Result<Self, GatingError> {
        if !(p.is_finite() && p >= 0.0) {
            return Err(GatingError::BadThreshold(p));
        }
        Ok(Self {
            p,
            state: AdaptiveState::default(),
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn set(&mut self, p: f64) {
        debug_assert!(p.is_finite() && p >= 0.0);
        self.p = p;
    }

    /// Records one window and applies the update. A window with no
    /// interventions keeps the previous threshold: collapsing to `p = 0`
    /// would make the next window intervene everywhere.
    pub fn observe(&mut self, delta: f64, epsb: f64, steps: usize, horizon: usize) -> f64 {
        self.state = AdaptiveState {
            last_delta_estimate: delta,
            last_epsb_estimate: epsb,
            steps_observed: self.state.steps_observed + steps,
        };
        if delta > 0.0 {
            self.p = update_p(&self.state, horizon);
        }
        self.p
    }
}

/// Threshold after a warmup window run with `p = 0`:
/// `(fraction of steps with gap > 0) · mean buffer loss · H`. When the mean
/// loss is zero, falls back to the median positive gap (0 if there is none).
pub fn init_p(gaps: &[f64], mean_loss: f64, horizon: usize) -> Result<f64, GatingError> {
    if gaps.is_empty() {
        return Err(GatingError::EmptyWindow);
    }
    let mut positive: Vec<f64> = gaps.iter().copied().filter(|&g| g > 0.0).collect();
    if mean_loss > 0.0 {
        let frac = positive.len() as f64 / gaps.len() as f64;
        return Ok(frac * mean_loss * horizon as f64);
    }
    if positive.is_empty() {
        return Ok(0.0);
    }
    positive.sort_by(f64::total_cmp);
    let n = positive.len();
    // Infinite gaps (KL surrogate) would make the median infinite; cap at H.
    let median = if n % 2 == 1 {
        positive[n / 2]
    } else {
        0.5 * (positive[n / 2 - 1] + positive[n / 2])
    };
    Ok(median.min(horizon as f64))
}
