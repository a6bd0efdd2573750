//! Empirical tail of the `D_Q` distribution against an exponential envelope.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::gating::{dq_gap, Gate};
use crate::mdp::{occupancy, OccupancyTable, PolicyTable, TabularMdp};
use crate::rng::SeededRng;

const GRID_POINTS: usize = 41;

/// Which occupancy the `(h, s)` pairs are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum TailWeighting {
    /// The switching teacher at threshold `p`.
    Teacher { p: f64 },
    /// The learner itself.
    Learner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub p: f64,
    /// Empirical `Pr(D_Q > p)`.
    pub survival: f64,
    /// `exp(-(p - mean) / std)`.
    pub envelope: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub sample_count: usize,
    pub mean: f64,
    pub std: f64,
    pub grid: Vec<TailPoint>,
    #[serde(skip)]
    pub samples: Vec<f64>,
}

impl TailReport {
    pub fn survival_is_monotone(&self) -> bool {
        self.grid.windows(2).all(|w| w[1].survival <= w[0].survival)
    }

    /// Raw samples, one per line.
    pub fn samples_text(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * 8);
        for v in &self.samples {
            writeln!(out, "{v:?}").unwrap();
        }
        out
    }
}

/// Draws `sample_count` pairs `(h, s)` with probability `d_h(s) / H` from
/// the exact occupancy, and records `D_Q(s, h)` for each.
pub fn dq_tail_analysis(
    mdp: &TabularMdp,
    gate: &Gate,
    learner: &PolicyTable,
    weighting: TailWeighting,
    sample_count: usize,
    seed: u64,
) -> TailReport {
    let d: OccupancyTable = match weighting {
        TailWeighting::Teacher { p } => occupancy(mdp, &gate.teacher_policy(learner, p)),
        TailWeighting::Learner => occupancy(mdp, learner),
    };
    let (ns, horizon) = (mdp.num_states(), mdp.horizon());
    let mut weights = Vec::with_capacity(ns * horizon);
    let mut gaps = Vec::with_capacity(ns * horizon);
    for h in 1..=horizon {
        for s in 0..ns {
            weights.push(d.at(h, s));
            gaps.push(dq_gap(&gate.q, &gate.pi_star, learner.row(s), s, h));
        }
    }
    let mut rng = SeededRng::new(seed);
    let samples: Vec<f64> = (0..sample_count).map(|_| gaps[rng.categorical(&weights)]).collect();

    let n = samples.len().max(1) as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std = var.sqrt();
    let max = samples.iter().copied().fold(0.0, f64::max);
    let top = if max > 0.0 { max } else { 1.0 };

    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let grid = (0..GRID_POINTS)
        .map(|i| {
            let p = top * i as f64 / (GRID_POINTS - 1) as f64;
            let above = sorted.len() - sorted.partition_point(|&x| x <= p);
            let survival = above as f64 / n;
            let envelope = if std > 0.0 {
                (-(p - mean) / std).exp()
            } else if p < mean {
                1.0
            } else {
                0.0
            };
            TailPoint {
                p,
                survival,
                envelope,
                satisfied: survival <= envelope,
            }
        })
        .collect();
    TailReport {
        sample_count: samples.len(),
        mean,
        std,
        grid,
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_cliffwalk;
    use crate::gating::CriterionKind;
    use crate::mdp::value_iteration_finite;

    fn cliff() -> (TabularMdp, Gate) {
        let m = make_cliffwalk(6, 12, 0.0).unwrap();
        let (q, pi) = value_iteration_finite(&m);
        (m, Gate::new(CriterionKind::QDiff, q, pi))
    }

    #[test]
    fn expert_learner_has_empty_tail() {
        let (m, gate) = cliff();
        let learner = gate.pi_star.as_stationary().unwrap();
        let r = dq_tail_analysis(&m, &gate, &learner, TailWeighting::Learner, 1000, 1);
        assert!(r.samples.iter().all(|&x| x == 0.0));
        assert!(r.grid.iter().skip(1).all(|g| g.survival == 0.0));
        assert!(r.grid.iter().all(|g| g.satisfied));
    }

    #[test]
    fn uniform_learner_tail_is_monotone_and_reproducible() {
        let (m, gate) = cliff();
        let learner = PolicyTable::uniform(m.num_states(), m.num_actions());
        let run = || dq_tail_analysis(&m, &gate, &learner, TailWeighting::Teacher { p: 1.0 }, 2000, 5);
        let a = run();
        assert!(a.survival_is_monotone());
        assert_eq!(a.grid.len(), GRID_POINTS);
        assert_eq!(a.samples_text(), run().samples_text());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&run()).unwrap());
    }
}
