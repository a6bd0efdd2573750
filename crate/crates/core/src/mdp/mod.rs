//! Exact finite-horizon tabular MDPs.
//!
//! Timesteps are 1-based everywhere (`h` in `1..=H`), matching the usual
//! finite-horizon notation. States and actions are 0-based indices.

mod divergence;
mod dp;
mod text;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use divergence::{kl_divergence, tv_divergence, DivergenceError};
pub use dp::{occupancy, policy_q, policy_value, value_iteration_finite};
pub use text::{dump_text, parse_text, TextFormatError};

/// Tolerance for every "is a probability distribution" check.
pub const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid MDP: {0}")]
    Invalid(ValidationReport),
    #[error("invalid policy: {0}")]
    Policy(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    /// `transition[(s * A + a) * S + s']`
    transition: Vec<f64>,
    /// `reward[s * A + a]`
    reward: Vec<f64>,
    initial: Vec<f64>,
}

/// One violated [`TabularMdp`] invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TransitionRowSum { state: usize, action: usize, sum: f64 },
    NegativeTransition { state: usize, action: usize, next: usize, value: f64 },
    RewardOutOfRange { state: usize, action: usize, value: f64 },
    InitialSum { sum: f64 },
    NegativeInitial { state: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TransitionRowSum { state, action, sum } => {
                write!(f, "transition row (s{state}, a{action}) sums to {sum}")
            }
            Violation::NegativeTransition { state, action, next, value } => write!(
                f,
                "transition (s{state}, a{action}) -> s{next} is negative ({value})"
            ),
            Violation::RewardOutOfRange { state, action, value } => {
                write!(f, "reward (s{state}, a{action}) = {value} outside [0, 1]")
            }
            Violation::InitialSum { sum } => write!(f, "initial distribution sums to {sum}"),
            Violation::NegativeInitial { state, value } => {
                write!(f, "initial probability of s{state} is negative ({value})")
            }
        }
    }
}

/// Every invariant violated by an MDP; empty iff the MDP is valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "no violations");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

fn row_is_distribution(row: &[f64]) -> bool {
    let sum: f64 = row.iter().sum();
    row.iter().all(|&p| p >= 0.0) && (sum - 1.0).abs() <= PROB_TOL
}

impl TabularMdp {
    /// Builds an MDP and rejects it unless every invariant holds.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        initial: Vec<f64>,
    ) -> Result<Self, MdpError> {
        let mdp = Self::from_parts(num_states, num_actions, horizon, transition, reward, initial)?;
        let report = mdp.validate();
        if report.is_valid() {
            Ok(mdp)
        } else {
            Err(MdpError::Invalid(report))
        }
    }

    /// Checks only that the arrays have consistent shapes. Use
    /// [`TabularMdp::validate`] for the probabilistic invariants.
    pub fn from_parts(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        initial: Vec<f64>,
    ) -> Result<Self, MdpError> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(MdpError::Shape(format!(
                "states, actions and horizon must be positive (got {num_states}, {num_actions}, {horizon})"
            )));
        }
        let sa = num_states * num_actions;
        if transition.len() != sa * num_states {
            return Err(MdpError::Shape(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                sa * num_states
            )));
        }
        if reward.len() != sa {
            return Err(MdpError::Shape(format!(
                "reward has {} entries, expected {sa}",
                reward.len()
            )));
        }
        if initial.len() != num_states {
            return Err(MdpError::Shape(format!(
                "initial has {} entries, expected {num_states}",
                initial.len()
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            transition,
            reward,
            initial,
        })
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.transition_row(s, a);
                for (next, &value) in row.iter().enumerate() {
                    if !(value >= 0.0) {
                        violations.push(Violation::NegativeTransition { state: s, action: a, next, value });
                    }
                }
                let sum: f64 = row.iter().sum();
                if !((sum - 1.0).abs() <= PROB_TOL) {
                    violations.push(Violation::TransitionRowSum { state: s, action: a, sum });
                }
                let r = self.reward(s, a);
                if !(0.0..=1.0).contains(&r) {
                    violations.push(Violation::RewardOutOfRange { state: s, action: a, value: r });
                }
            }
        }
        for (state, &value) in self.initial.iter().enumerate() {
            if !(value >= 0.0) {
                violations.push(Violation::NegativeInitial { state, value });
            }
        }
        let sum: f64 = self.initial.iter().sum();
        if !((sum - 1.0).abs() <= PROB_TOL) {
            violations.push(Violation::InitialSum { sum });
        }
        ValidationReport { violations }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Same dynamics with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Self {
        assert!(horizon > 0);
        Self {
            horizon,
            ..self.clone()
        }
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }
}

/// A (possibly time-varying) action distribution per state.
pub trait Policy {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    /// Distribution over actions in state `s` at 1-based timestep `h`.
    fn probs(&self, h: usize, s: usize) -> &[f64];
}

/// Stationary stochastic policy; learners are always of this form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            assert!(a < num_actions, "action {a} out of range");
            probs[s * num_actions + a] = 1.0;
        }
        Self {
            num_states: actions.len(),
            num_actions,
            probs,
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, MdpError> {
        let num_states = rows.len();
        let num_actions = rows.first().map_or(0, Vec::len);
        if num_states == 0 || num_actions == 0 {
            return Err(MdpError::Policy("empty policy".into()));
        }
        let mut probs = Vec::with_capacity(num_states * num_actions);
        for (s, row) in rows.into_iter().enumerate() {
            if row.len() != num_actions {
                return Err(MdpError::Policy(format!("row {s} has {} actions", row.len())));
            }
            if !row_is_distribution(&row) {
                return Err(MdpError::Policy(format!("row {s} is not a distribution")));
            }
            probs.extend(row);
        }
        Ok(Self {
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub(crate) fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn is_deterministic(&self) -> bool {
        (0..self.num_states).all(|s| self.row(s).iter().all(|&p| p == 0.0 || p == 1.0))
    }

    pub fn is_valid(&self) -> bool {
        (0..self.num_states).all(|s| row_is_distribution(self.row(s)))
    }

    /// Most likely action, lowest index on ties.
    pub fn argmax(&self, s: usize) -> usize {
        argmax_lowest(self.row(s))
    }
}

impl Policy for PolicyTable {
    fn num_states(&self) -> usize {
        self.num_states
    }
    fn num_actions(&self) -> usize {
        self.num_actions
    }
    fn probs(&self, _h: usize, s: usize) -> &[f64] {
        self.row(s)
    }
}

/// Time-indexed stochastic policy, e.g. the switching teacher.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedPolicy {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl TimedPolicy {
    /// Builds row `(h, s)` from `row(h, s)`.
    pub fn from_fn<F>(horizon: usize, num_states: usize, num_actions: usize, mut row: F) -> Self
    where
        F: FnMut(usize, usize) -> Vec<f64>,
    {
        let mut probs = Vec::with_capacity(horizon * num_states * num_actions);
        for h in 1..=horizon {
            for s in 0..num_states {
                let r = row(h, s);
                assert_eq!(r.len(), num_actions);
                probs.extend(r);
            }
        }
        Self {
            horizon,
            num_states,
            num_actions,
            probs,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

impl Policy for TimedPolicy {
    fn num_states(&self) -> usize {
        self.num_states
    }
    fn num_actions(&self) -> usize {
        self.num_actions
    }
    fn probs(&self, h: usize, s: usize) -> &[f64] {
        let start = ((h - 1) * self.num_states + s) * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }
}

/// Deterministic time-indexed policy; the expert π* is one of these.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyPolicy {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    actions: Vec<usize>,
    one_hot: Vec<f64>,
}

impl GreedyPolicy {
    /// Greedy policy of `q`, lowest action index on ties.
    pub fn from_q(q: &QTable) -> Self {
        let (horizon, num_states) = (q.horizon(), q.num_states());
        let mut actions = Vec::with_capacity(horizon * num_states);
        for h in 1..=horizon {
            for s in 0..num_states {
                actions.push(argmax_lowest(q.row(h, s)));
            }
        }
        Self::from_actions(horizon, num_states, q.num_actions(), actions)
    }

    /// The same action at every timestep.
    pub fn stationary(horizon: usize, num_actions: usize, actions: &[usize]) -> Self {
        let num_states = actions.len();
        let all = (0..horizon).flat_map(|_| actions.iter().copied()).collect();
        Self::from_actions(horizon, num_states, num_actions, all)
    }

    fn from_actions(horizon: usize, num_states: usize, num_actions: usize, actions: Vec<usize>) -> Self {
        let mut one_hot = vec![0.0; actions.len() * num_actions];
        for (i, &a) in actions.iter().enumerate() {
            one_hot[i * num_actions + a] = 1.0;
        }
        Self {
            horizon,
            num_states,
            num_actions,
            actions,
            one_hot,
        }
    }

    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[(h - 1) * self.num_states + s]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `Some` when the action does not depend on the timestep.
    pub fn as_stationary(&self) -> Option<PolicyTable> {
        let first: Vec<usize> = (0..self.num_states).map(|s| self.action(1, s)).collect();
        let same = (2..=self.horizon).all(|h| (0..self.num_states).all(|s| self.action(h, s) == first[s]));
        same.then(|| PolicyTable::deterministic(self.num_actions, &first))
    }
}

impl Policy for GreedyPolicy {
    fn num_states(&self) -> usize {
        self.num_states
    }
    fn num_actions(&self) -> usize {
        self.num_actions
    }
    fn probs(&self, h: usize, s: usize) -> &[f64] {
        let start = ((h - 1) * self.num_states + s) * self.num_actions;
        &self.one_hot[start..start + self.num_actions]
    }
}

/// `Q_h(s, a)` for `h` in `1..=H`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub(crate) fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            values: vec![0.0; horizon * num_states * num_actions],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn offset(&self, h: usize, s: usize) -> usize {
        debug_assert!((1..=self.horizon).contains(&h));
        ((h - 1) * self.num_states + s) * self.num_actions
    }

    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.values[self.offset(h, s) + a]
    }

    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        let o = self.offset(h, s);
        &self.values[o..o + self.num_actions]
    }

    pub(crate) fn row_mut(&mut self, h: usize, s: usize) -> &mut [f64] {
        let o = self.offset(h, s);
        &mut self.values[o..o + self.num_actions]
    }

    /// `Σ_a π(a|s) Q_h(s, a)`.
    pub fn expected(&self, h: usize, s: usize, probs: &[f64]) -> f64 {
        self.row(h, s).iter().zip(probs).map(|(q, p)| q * p).sum()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Applies `f(h, s, a, value)` to every entry.
    pub fn map<F: FnMut(usize, usize, usize, f64) -> f64>(&self, mut f: F) -> QTable {
        let mut out = self.clone();
        for h in 1..=self.horizon {
            for s in 0..self.num_states {
                let row = out.row_mut(h, s);
                for (a, v) in row.iter_mut().enumerate() {
                    *v = f(h, s, a, *v);
                }
            }
        }
        out
    }
}

/// State distribution per timestep, `d_h(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTable {
    horizon: usize,
    num_states: usize,
    d: Vec<f64>,
}

impl OccupancyTable {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn at(&self, h: usize, s: usize) -> f64 {
        self.d[(h - 1) * self.num_states + s]
    }

    pub fn row(&self, h: usize) -> &[f64] {
        &self.d[(h - 1) * self.num_states..h * self.num_states]
    }

    /// `d^π = (1/H) Σ_h d_h^π`.
    pub fn averaged(&self) -> Vec<f64> {
        let mut avg = vec![0.0; self.num_states];
        for h in 1..=self.horizon {
            for (acc, &p) in avg.iter_mut().zip(self.row(h)) {
                *acc += p;
            }
        }
        avg.iter_mut().for_each(|p| *p /= self.horizon as f64);
        avg
    }
}

pub(crate) fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> TabularMdp {
        TabularMdp::new(
            2,
            2,
            2,
            vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn well_formed_mdp_has_empty_report() {
        assert!(two_state().validate().is_valid());
    }

    #[test]
    fn short_transition_row_is_named() {
        let m = TabularMdp::from_parts(
            2,
            2,
            2,
            vec![0.9, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![1.0, 0.0],
        )
        .unwrap();
        let report = m.validate();
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(
            report.violations[0],
            Violation::TransitionRowSum { state: 0, action: 0, .. }
        ));
        assert!(report.to_string().contains("(s0, a0)"));
    }

    #[test]
    fn reward_out_of_range_is_named() {
        let m = TabularMdp::from_parts(
            2,
            2,
            2,
            vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
            vec![1.0, 1.5, 0.0, 0.0],
            vec![1.0, 0.0],
        )
        .unwrap();
        let report = m.validate();
        assert_eq!(
            report.violations,
            vec![Violation::RewardOutOfRange { state: 0, action: 1, value: 1.5 }]
        );
        assert!(matches!(
            TabularMdp::new(2, 2, 2, m.transition.clone(), m.reward.clone(), m.initial.clone()),
            Err(MdpError::Invalid(_))
        ));
    }

    #[test]
    fn nan_entries_are_reported() {
        let m = TabularMdp::from_parts(1, 1, 1, vec![f64::NAN], vec![0.5], vec![1.0]).unwrap();
        assert_eq!(m.validate().violations.len(), 2);
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            TabularMdp::from_parts(2, 2, 2, vec![1.0; 3], vec![0.0; 4], vec![0.5, 0.5]),
            Err(MdpError::Shape(_))
        ));
        assert!(TabularMdp::from_parts(0, 2, 2, vec![], vec![], vec![]).is_err());
    }

    #[test]
    fn policy_rows() {
        let p = PolicyTable::deterministic(3, &[2, 0]);
        assert_eq!(p.row(0), &[0.0, 0.0, 1.0]);
        assert!(p.is_deterministic());
        assert!(!PolicyTable::uniform(2, 2).is_deterministic());
        assert!(PolicyTable::from_rows(vec![vec![0.5, 0.6]]).is_err());
        assert_eq!(PolicyTable::uniform(1, 3).argmax(0), 0);
    }

    #[test]
    fn greedy_ties_break_low() {
        let mut q = QTable::zeros(2, 1, 3);
        q.row_mut(1, 0).copy_from_slice(&[1.0, 2.0, 2.0]);
        let g = GreedyPolicy::from_q(&q);
        assert_eq!(g.action(1, 0), 1);
        assert_eq!(g.action(2, 0), 0);
        assert!(g.as_stationary().is_none());
        let st = GreedyPolicy::stationary(3, 2, &[1, 0]);
        assert_eq!(st.as_stationary().unwrap(), PolicyTable::deterministic(2, &[1, 0]));
    }
}
