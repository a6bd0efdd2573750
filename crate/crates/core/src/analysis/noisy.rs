//! Training with a perturbed `Q*` behind the gate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::training::{train_adapmen, TrainConfig, TrainError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyQPoint {
    pub noise: f64,
    pub mean_gap: f64,
    pub mean_teacher_gap: f64,
    pub mean_final_delta: f64,
    pub mean_expert_usage: f64,
}

/// AdapMen with uniform `[-noise, noise]` perturbations of every gate-side
/// `Q*` entry, averaged over `seeds`. Noise 0 is the unperturbed run.
pub fn noisy_q_experiment(base: &TrainConfig, noise_levels: &[f64], seeds: &[u64]) -> Result<Vec<NoisyQPoint>, TrainError> {
    noise_levels
        .iter()
        .map(|&noise| {
            let mut config = base.clone();
            config.q_noise = noise;
            let finals = seeds
                .par_iter()
                .map(|&seed| {
                    let run = train_adapmen(&config, seed, false)?;
                    Ok(run.metrics.last().cloned())
                })
                .collect::<Result<Vec<_>, TrainError>>()?;
            let finals: Vec<_> = finals.into_iter().flatten().collect();
            let n = finals.len().max(1) as f64;
            let mean = |f: &dyn Fn(&crate::training::IterationMetrics) -> f64| finals.iter().map(f).sum::<f64>() / n;
            Ok(NoisyQPoint {
                noise,
                mean_gap: mean(&|m| m.suboptimality_gap),
                mean_teacher_gap: mean(&|m| m.teacher_gap),
                mean_final_delta: mean(&|m| m.delta_estimate),
                mean_expert_usage: mean(&|m| m.expert_action_usage as f64),
            })
        })
        .collect()
}
