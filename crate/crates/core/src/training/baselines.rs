//! Behavior cloning and DAgger on the same learner and metrics.

use super::buffer::{InterventionBuffer, Sample};
use super::learner::Learner;
use super::rollout::StepRecord;
use super::runner::Setup;
use super::{streams, IterationMetrics, RunResult, TrainConfig, TrainError};
use crate::gating::dq_gap;
use crate::mdp::policy_value;
use crate::rng::SeededRng;

#[derive(Clone, Copy, PartialEq)]
enum Collector {
    /// Roll out the expert and store every visit.
    Expert,
    /// Roll out the learner and label every visit.
    Learner,
}

fn run(config: &TrainConfig, seed: u64, record_steps: bool, collector: Collector) -> Result<RunResult, TrainError> {
    let setup = Setup::new(config)?;
    let mdp = &setup.mdp;
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut learner = Learner::new(config.learner.clone(), ns, na);
    let mut buffer = InterventionBuffer::new(config.buffer_capacity);
    let mut env_rng = SeededRng::new(SeededRng::derive_seed(seed, streams::ENV));
    let mut action_rng = SeededRng::new(SeededRng::derive_seed(seed, streams::ACTION));
    let mut fit_rng = SeededRng::new(SeededRng::derive_seed(seed, streams::FIT));
    let mut metrics = Vec::new();
    let mut steps = Vec::new();
    let mut episodes = 0;
    let (mut h, mut state) = (1, env_rng.categorical(mdp.initial()));

    for n in 1..=config.steps {
        let row = learner.policy().row(state);
        let learner_action = action_rng.categorical(row);
        let expert_action = setup.pi_star.action(h, state);
        let executed = match collector {
            Collector::Expert => expert_action,
            Collector::Learner => learner_action,
        };
        buffer.push(Sample {
            state,
            action: expert_action,
            h,
        });
        if record_steps {
            steps.push(StepRecord {
                h,
                state,
                learner_action,
                expert_action: Some(expert_action),
                gap: dq_gap(&setup.q_star, &setup.pi_star, row, state, h),
                intervened: true,
                executed_action: executed,
                reward: mdp.reward(state, executed),
            });
        }
        let next = env_rng.categorical(mdp.transition_row(state, executed));
        if h == horizon {
            episodes += 1;
            h = 1;
            state = env_rng.categorical(mdp.initial());
        } else {
            h += 1;
            state = next;
        }

        if n % config.update_interval == 0 || n == config.steps {
            learner.fit(&buffer, &mut fit_rng);
            let j_learner = policy_value(mdp, learner.policy());
            let j_teacher = match collector {
                Collector::Expert => setup.j_star,
                Collector::Learner => j_learner,
            };
            metrics.push(IterationMetrics {
                iteration: metrics.len() + 1,
                env_steps: n,
                episodes,
                delta_estimate: 1.0,
                epsb_estimate: learner.estimate_epsb(&buffer).unwrap_or(0.0),
                p: 0.0,
                j_learner,
                j_teacher,
                j_expert: setup.j_star,
                suboptimality_gap: setup.j_star - j_learner,
                teacher_gap: setup.j_star - j_teacher,
                expert_action_usage: buffer.total_added(),
                buffer_len: buffer.len(),
            });
        }
    }
    Ok(RunResult {
        metrics,
        learner: learner.policy().clone(),
        buffer,
        steps,
    })
}

/// Behavior cloning: expert rollouts, every visit labelled.
pub fn train_bc(config: &TrainConfig, seed: u64, record_steps: bool) -> Result<RunResult, TrainError> {
    run(config, seed, record_steps, Collector::Expert)
}

/// DAgger: learner rollouts, every visit labelled by the expert, refit on
/// the aggregate.
pub fn train_dagger(config: &TrainConfig, seed: u64, record_steps: bool) -> Result<RunResult, TrainError> {
    run(config, seed, record_steps, Collector::Learner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvSpec;
    use crate::training::{Algorithm, LearnerConfig};

    fn config(algorithm: Algorithm, label_noise: f64) -> TrainConfig {
        TrainConfig {
            env: EnvSpec::Cliffwalk {
                width: 5,
                horizon: 8,
                slip: 0.1,
            },
            algorithm,
            criterion: Default::default(),
            learner: LearnerConfig {
                label_noise,
                ..LearnerConfig::default()
            },
            steps: 4000,
            update_interval: 200,
            buffer_capacity: None,
            q_noise: 0.0,
        }
    }

    #[test]
    fn bc_uses_one_label_per_step() {
        let out = train_bc(&config(Algorithm::Bc, 0.0), 2, false).unwrap();
        let last = out.metrics.last().unwrap();
        assert_eq!(last.expert_action_usage, last.env_steps);
        assert!(last.suboptimality_gap < 0.05, "{last:?}");
    }

    #[test]
    fn dagger_converges_without_noise() {
        let out = train_dagger(&config(Algorithm::Dagger, 0.0), 2, false).unwrap();
        assert!(out.metrics.last().unwrap().suboptimality_gap < 0.05);
    }
}
