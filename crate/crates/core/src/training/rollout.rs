//! Single teacher steps and whole episodes at a fixed learner and threshold.

use serde::{Deserialize, Serialize};

use super::buffer::{InterventionBuffer, Sample};
use crate::gating::{should_intervene, Gate};
use crate::mdp::{PolicyTable, TabularMdp};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub h: usize,
    pub state: usize,
    pub learner_action: usize,
    /// Present exactly when the expert acted.
    pub expert_action: Option<usize>,
    pub gap: f64,
    pub intervened: bool,
    pub executed_action: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutTrace {
    pub steps: Vec<StepRecord>,
    pub episode_return: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherDecision {
    pub executed_action: usize,
    pub intervened: bool,
    pub gap: f64,
}

/// Switching teacher at `(s, h)`: the expert's action if the gate fires,
/// otherwise a sample from the learner.
pub fn teacher_step(
    learner: &PolicyTable,
    gate: &Gate,
    p: f64,
    s: usize,
    h: usize,
    rng: &mut SeededRng,
) -> TeacherDecision {
    let gap = gate.gap(learner.row(s), s, h);
    let intervened = should_intervene(p, gap);
    let executed_action = if intervened {
        gate.pi_star.action(h, s)
    } else {
        rng.categorical(learner.row(s))
    };
    TeacherDecision {
        executed_action,
        intervened,
        gap,
    }
}

/// One `H`-step episode of the switching teacher from `s ~ ρ`. Every
/// intervention appends `(s, a*, h)` to `buffer`.
pub fn rollout_episode(
    mdp: &TabularMdp,
    learner: &PolicyTable,
    gate: &Gate,
    p: f64,
    buffer: &mut InterventionBuffer,
    rng: &mut SeededRng,
) -> RolloutTrace {
    let mut trace = RolloutTrace::default();
    let mut s = rng.categorical(mdp.initial());
    for h in 1..=mdp.horizon() {
        let learner_action = rng.categorical(learner.row(s));
        let gap = gate.gap(learner.row(s), s, h);
        let intervened = should_intervene(p, gap);
        let expert_action = intervened.then(|| gate.pi_star.action(h, s));
        let executed_action = expert_action.unwrap_or(learner_action);
        if let Some(action) = expert_action {
            buffer.push(Sample { state: s, action, h });
        }
        let reward = mdp.reward(s, executed_action);
        trace.episode_return += reward;
        trace.steps.push(StepRecord {
            h,
            state: s,
            learner_action,
            expert_action,
            gap,
            intervened,
            executed_action,
            reward,
        });
        s = rng.categorical(mdp.transition_row(s, executed_action));
    }
    trace
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_cliffwalk;
    use crate::gating::CriterionKind;
    use crate::mdp::value_iteration_finite;

    fn cliff_gate() -> (TabularMdp, Gate) {
        let m = make_cliffwalk(5, 10, 0.0).unwrap();
        let (q, pi) = value_iteration_finite(&m);
        (m, Gate::new(CriterionKind::QDiff, q, pi))
    }

    #[test]
    fn zero_threshold_walks_the_expert_path() {
        let (m, gate) = cliff_gate();
        let learner = PolicyTable::uniform(m.num_states(), m.num_actions());
        let mut buffer = InterventionBuffer::new(None);
        let trace = rollout_episode(&m, &learner, &gate, 0.0, &mut buffer, &mut SeededRng::new(3));
        assert_eq!(trace.episode_return, 10.0);
        // The last step has zero gap on the cliff (every action earns 1).
        assert_eq!(buffer.len(), 9);
        for step in &trace.steps {
            assert_eq!(step.intervened, step.expert_action.is_some());
            if step.intervened {
                assert_eq!(step.executed_action, step.expert_action.unwrap());
            }
        }
    }

    #[test]
    fn perfect_learner_never_intervenes() {
        let (m, gate) = cliff_gate();
        let learner = gate.pi_star.as_stationary().unwrap();
        let mut buffer = InterventionBuffer::new(None);
        let trace = rollout_episode(&m, &learner, &gate, 0.0, &mut buffer, &mut SeededRng::new(3));
        assert!(buffer.is_empty());
        assert!(trace.steps.iter().all(|s| !s.intervened && s.gap == 0.0));
    }

    #[test]
    fn rollouts_are_deterministic() {
        let (m, gate) = cliff_gate();
        let learner = PolicyTable::uniform(m.num_states(), m.num_actions());
        let run = || {
            let mut buffer = InterventionBuffer::new(None);
            rollout_episode(&m, &learner, &gate, 2.0, &mut buffer, &mut SeededRng::new(9))
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn huge_threshold_never_intervenes() {
        let (m, gate) = cliff_gate();
        let learner = PolicyTable::uniform(m.num_states(), m.num_actions());
        let mut rng = SeededRng::new(1);
        for h in 1..=10 {
            assert!(!teacher_step(&learner, &gate, 1e9, 0, h, &mut rng).intervened);
        }
    }
}
