//! Tabular learners fitted on the intervention buffer.

use serde::{Deserialize, Serialize};

use super::buffer::InterventionBuffer;
use super::TrainError;
use crate::mdp::{Policy, PolicyTable};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    /// Smoothed label counts, refit from the whole buffer.
    Mle,
    /// One normalized exponentiated-gradient step per refit.
    Eg,
}

/// Per-sample loss behind the `ε_b` estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsbEstimator {
    /// `1 - π(a*|s)`: probability that the learner disagrees with the label
    /// (equal to the TV distance to the one-hot label).
    Mismatch,
    /// `1` iff the learner's most likely action differs from the label.
    ArgmaxMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    #[serde(default = "default_kind")]
    pub kind: LearnerKind,
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// Probability that a stored label is replaced by a random other action
    /// at fit time (redrawn on every fit).
    #[serde(default)]
    pub label_noise: f64,
    #[serde(default = "default_estimator")]
    pub epsb_estimator: EpsbEstimator,
}

fn default_kind() -> LearnerKind {
    LearnerKind::Mle
}
fn default_smoothing() -> f64 {
    0.01
}
fn default_learning_rate() -> f64 {
    0.5
}
fn default_estimator() -> EpsbEstimator {
    EpsbEstimator::Mismatch
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            smoothing: default_smoothing(),
            learning_rate: default_learning_rate(),
            label_noise: 0.0,
            epsb_estimator: default_estimator(),
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.smoothing > 0.0 && self.smoothing.is_finite()) {
            return Err(TrainError::config("learner.smoothing", "must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::config("learner.learning_rate", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return Err(TrainError::config("learner.label_noise", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Label as seen by one fit: the stored label, or with probability `noise`
/// a uniformly random different action.
fn noisy_label(label: usize, num_actions: usize, noise: f64, rng: &mut SeededRng) -> usize {
    if noise <= 0.0 || num_actions < 2 || !rng.bernoulli(noise) {
        return label;
    }
    let other = rng.below(num_actions - 1);
    if other >= label {
        other + 1
    } else {
        other
    }
}

/// `π(a|s) ∝ count(s, a) + smoothing`; states without samples are uniform.
pub fn fit_mle(
    buffer: &InterventionBuffer,
    num_states: usize,
    num_actions: usize,
    smoothing: f64,
    label_noise: f64,
    rng: &mut SeededRng,
) -> PolicyTable {
    let mut counts = vec![0.0; num_states * num_actions];
    let mut seen = vec![false; num_states];
    for sample in buffer.iter() {
        let a = noisy_label(sample.action, num_actions, label_noise, rng);
        counts[sample.state * num_actions + a] += 1.0;
        seen[sample.state] = true;
    }
    let mut policy = PolicyTable::uniform(num_states, num_actions);
    for s in (0..num_states).filter(|&s| seen[s]) {
        let row = &counts[s * num_actions..(s + 1) * num_actions];
        let total: f64 = row.iter().sum::<f64>() + smoothing * num_actions as f64;
        for (p, c) in policy.row_mut(s).iter_mut().zip(row) {
            *p = (c + smoothing) / total;
        }
    }
    policy
}

/// Normalized exponentiated gradient: `w ← w ⊙ exp(-η z)`, renormalized.
pub fn fit_eg_step(weights: &mut [f64], z: &[f64], eta: f64) -> Result<(), TrainError> {
    if weights.len() != z.len() {
        return Err(TrainError::LossVector(format!(
            "{} weights but {} losses",
            weights.len(),
            z.len()
        )));
    }
    if let Some(bad) = z.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(TrainError::LossVector(format!("loss {bad} outside [0, 1]")));
    }
    for (w, l) in weights.iter_mut().zip(z) {
        *w *= (-eta * l).exp();
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Learner {
    config: LearnerConfig,
    policy: PolicyTable,
}

impl Learner {
    pub fn new(config: LearnerConfig, num_states: usize, num_actions: usize) -> Self {
        Self {
            config,
            policy: PolicyTable::uniform(num_states, num_actions),
        }
    }

    pub fn policy(&self) -> &PolicyTable {
        &self.policy
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn fit(&mut self, buffer: &InterventionBuffer, rng: &mut SeededRng) {
        let (ns, na) = (self.policy.num_states(), self.policy.num_actions());
        match self.config.kind {
            LearnerKind::Mle => {
                self.policy = fit_mle(buffer, ns, na, self.config.smoothing, self.config.label_noise, rng);
            }
            LearnerKind::Eg => {
                if buffer.is_empty() {
                    return;
                }
                // z(s)_a = β̂(s) - (share of buffer labelled (s, a)), i.e.
                // β̂(s) · (1 - empirical label distribution at s).
                let n = buffer.len() as f64;
                let mut label_mass = vec![0.0; ns * na];
                for sample in buffer.iter() {
                    let a = noisy_label(sample.action, na, self.config.label_noise, rng);
                    label_mass[sample.state * na + a] += 1.0 / n;
                }
                for s in 0..ns {
                    let row = &label_mass[s * na..(s + 1) * na];
                    let beta: f64 = row.iter().sum();
                    if beta == 0.0 {
                        continue;
                    }
                    let z: Vec<f64> = row.iter().map(|m| (beta - m).clamp(0.0, 1.0)).collect();
                    fit_eg_step(self.policy.row_mut(s), &z, self.config.learning_rate)
                        .expect("loss entries lie in [0, 1]");
                }
            }
        }
    }

    /// Loss of the current policy on one label.
    pub fn loss(&self, state: usize, label: usize) -> f64 {
        match self.config.epsb_estimator {
            EpsbEstimator::Mismatch => 1.0 - self.policy.row(state)[label],
            EpsbEstimator::ArgmaxMismatch => f64::from(u8::from(self.policy.argmax(state) != label)),
        }
    }

    /// Mean loss over the buffer; `None` when it is empty.
    pub fn estimate_epsb(&self, buffer: &InterventionBuffer) -> Option<f64> {
        if buffer.is_empty() {
            return None;
        }
        let total: f64 = buffer.iter().map(|s| self.loss(s.state, s.action)).sum();
        Some(total / buffer.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::buffer::Sample;

    fn buffer_of(samples: &[(usize, usize)]) -> InterventionBuffer {
        let mut b = InterventionBuffer::new(None);
        for &(state, action) in samples {
            b.push(Sample { state, action, h: 1 });
        }
        b
    }

    #[test]
    fn empty_buffer_gives_uniform() {
        let mut rng = SeededRng::new(0);
        let p = fit_mle(&InterventionBuffer::new(None), 3, 2, 0.1, 0.0, &mut rng);
        assert_eq!(p, PolicyTable::uniform(3, 2));
    }

    #[test]
    fn counts_dominate_small_smoothing() {
        let mut rng = SeededRng::new(0);
        let p = fit_mle(&buffer_of(&[(0, 0); 10]), 2, 2, 1e-9, 0.0, &mut rng);
        assert!(p.row(0)[0] > 1.0 - 1e-9);
        assert_eq!(p.row(1), &[0.5, 0.5]);
    }

    #[test]
    fn noisy_labels_never_repeat_the_original() {
        let mut rng = SeededRng::new(1);
        for _ in 0..1000 {
            assert_ne!(noisy_label(2, 4, 1.0, &mut rng), 2);
        }
    }

    #[test]
    fn eg_step_examples() {
        let mut w = vec![0.5, 0.5];
        fit_eg_step(&mut w, &[0.0, 0.0], 0.5).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
        fit_eg_step(&mut w, &[1.0, 0.0], 0.5).unwrap();
        let e = (-0.5f64).exp();
        assert!((w[0] - e / (1.0 + e)).abs() < 1e-15);
        assert!((w[0] - 0.3775406687981454).abs() < 1e-12);
        let mut last = w[0];
        for _ in 0..20 {
            fit_eg_step(&mut w, &[1.0, 0.0], 0.5).unwrap();
            assert!(w[0] < last);
            last = w[0];
        }
        assert!(fit_eg_step(&mut w, &[1.5, 0.0], 0.5).is_err());
        assert!(fit_eg_step(&mut w, &[0.0], 0.5).is_err());
    }

    #[test]
    fn eg_learner_moves_toward_labels() {
        let config = LearnerConfig {
            kind: LearnerKind::Eg,
            ..LearnerConfig::default()
        };
        let mut learner = Learner::new(config, 2, 3);
        let buffer = buffer_of(&[(0, 2), (0, 2), (1, 0)]);
        let mut rng = SeededRng::new(0);
        for _ in 0..50 {
            learner.fit(&buffer, &mut rng);
        }
        assert_eq!(learner.policy().argmax(0), 2);
        assert_eq!(learner.policy().argmax(1), 0);
        assert!(learner.policy().is_valid());
    }

    #[test]
    fn epsb_estimators() {
        let buffer = buffer_of(&[(0, 0), (1, 1)]);
        let mut learner = Learner::new(LearnerConfig::default(), 2, 2);
        assert_eq!(learner.estimate_epsb(&buffer), Some(0.5));
        learner.policy = PolicyTable::from_rows(vec![vec![0.9, 0.1], vec![0.4, 0.6]]).unwrap();
        assert!((learner.estimate_epsb(&buffer).unwrap() - 0.25).abs() < 1e-15);
        learner.config.epsb_estimator = EpsbEstimator::ArgmaxMismatch;
        assert_eq!(learner.estimate_epsb(&buffer), Some(0.0));
        assert_eq!(learner.estimate_epsb(&InterventionBuffer::new(None)), None);
    }
}
