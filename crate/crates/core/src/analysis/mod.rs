//! Numerical verification of the bounds and the experiments built on them.

mod bounds;
mod noisy;
mod scaling;
mod tails;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::make_random_mdp;
use crate::gating::{CriterionKind, Gate};
use crate::mdp::{policy_value, value_iteration_finite, PolicyTable, TabularMdp};
use crate::rng::SeededRng;

pub use bounds::{
    teacher_stats, verify_dagger_envelope, verify_p_choice, verify_pinsker_surrogates,
    verify_policy_difference_lemma, verify_policy_divergence_bound, verify_safety, verify_thm_suboptimality,
    BoundInputs, BoundReport, DivergenceBoundReport, PChoiceReport, StateBound, TeacherStats, BOUND_TOL,
};
pub use noisy::{noisy_q_experiment, NoisyQPoint};
pub use scaling::{fit_line, scaling_experiment, EnvelopeCheck, ScalingOutcome, ScalingPoint, ScalingReport};
pub use tails::{dq_tail_analysis, TailPoint, TailReport, TailWeighting};

/// Random stochastic policy: each row is one-hot with probability 1/4,
/// otherwise normalized `1 - u` weights.
pub fn random_policy(num_states: usize, num_actions: usize, rng: &mut SeededRng) -> PolicyTable {
    let rows = (0..num_states)
        .map(|_| {
            if rng.bernoulli(0.25) {
                let mut row = vec![0.0; num_actions];
                row[rng.below(num_actions)] = 1.0;
                row
            } else {
                let w: Vec<f64> = (0..num_actions).map(|_| 1.0 - rng.next_f64()).collect();
                let total: f64 = w.iter().sum();
                w.into_iter().map(|x| x / total).collect()
            }
        })
        .collect();
    PolicyTable::from_rows(rows).expect("rows are distributions")
}

/// One random verification instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub index: usize,
    /// Seed the MDP was generated from.
    pub seed: u64,
    pub mdp: TabularMdp,
    pub learner: PolicyTable,
    pub other: PolicyTable,
}

impl Instance {
    pub fn describe(&self) -> String {
        format!(
            "instance {} (mdp seed {}, S={}, A={}, H={})",
            self.index,
            self.seed,
            self.mdp.num_states(),
            self.mdp.num_actions(),
            self.mdp.horizon()
        )
    }
}

/// Instance `index` of the sweep seeded by `seed`: `S ∈ [2, 6]`,
/// `A ∈ [2, 4]`, `H ∈ [1, 8]`, reward sparsity in `{0, 0.5}`.
pub fn random_instance(seed: u64, index: usize) -> Instance {
    let mdp_seed = SeededRng::derive_seed(seed, index as u64);
    let mut rng = SeededRng::new(SeededRng::derive_seed(mdp_seed, 0xA11CE));
    let ns = 2 + rng.below(5);
    let na = 2 + rng.below(3);
    let horizon = 1 + rng.below(8);
    let sparsity = if rng.bernoulli(0.5) { 0.0 } else { 0.5 };
    let mdp = make_random_mdp(ns, na, horizon, mdp_seed, sparsity).expect("parameters are in range");
    let learner = random_policy(ns, na, &mut rng);
    let other = random_policy(ns, na, &mut rng);
    Instance {
        index,
        seed: mdp_seed,
        mdp,
        learner,
        other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub instance: usize,
    pub mdp_seed: u64,
    pub description: String,
    pub report: BoundReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub instances: usize,
    pub checks: usize,
    /// Instances where the threshold equation has an exact fixed point.
    pub p_fixed_points: usize,
    /// Instances where it only has a bracketed jump.
    pub p_brackets: usize,
    pub violations: Vec<Violation>,
}

impl SweepSummary {
    pub fn all_hold(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Threshold grid `{0, 0.1, ..., 1} · H`.
pub fn p_grid(horizon: usize) -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0 * horizon as f64).collect()
}

/// Every exact check on one instance; returns `(checks, reports that fail,
/// p-choice was a fixed point)`.
pub fn check_instance(inst: &Instance) -> (usize, Vec<BoundReport>, bool) {
    let mdp = &inst.mdp;
    let (q, pi) = value_iteration_finite(mdp);
    let gate = Gate::new(CriterionKind::QDiff, q, pi);
    let mut reports = vec![
        verify_policy_difference_lemma(mdp, &inst.learner, &inst.other),
        verify_policy_difference_lemma(mdp, &gate.pi_star, &inst.learner),
        verify_dagger_envelope(mdp, &gate, &inst.learner),
    ];
    for (name, r) in [
        ("divergence", verify_policy_divergence_bound(&gate.q, &gate.pi_star, &inst.learner)),
        ("pinsker", verify_pinsker_surrogates(&gate.pi_star, &inst.learner)),
    ] {
        let worst = r
            .per_state
            .iter()
            .min_by(|a, b| a.report.slack.total_cmp(&b.report.slack))
            .map(|b| b.report.clone());
        if let Some(mut w) = worst {
            w.name = format!("{name} (worst state)");
            reports.push(w);
        }
    }
    for p in p_grid(mdp.horizon()) {
        reports.push(verify_thm_suboptimality(mdp, &gate, &inst.learner, p));
        reports.push(verify_safety(mdp, &gate, &inst.learner, p));
    }
    let j_star = policy_value(mdp, &gate.pi_star);
    let j_teacher = policy_value(mdp, &gate.teacher_policy(&inst.learner, 0.0));
    reports.push(BoundReport::equality(
        "zero_threshold_teacher_is_optimal",
        j_teacher,
        j_star,
        BoundInputs {
            p: Some(0.0),
            horizon: mdp.horizon(),
            ..Default::default()
        },
    ));
    let pc = verify_p_choice(mdp, &gate, &inst.learner);
    reports.push(pc.report);
    let checks = reports.len();
    (checks, reports.into_iter().filter(|r| !r.holds).collect(), pc.fixed_point)
}

/// Runs [`check_instance`] on `instance_count` random instances (in
/// parallel, merged in instance order).
pub fn bounds_sweep(instance_count: usize, seed: u64) -> SweepSummary {
    let results: Vec<(Instance, (usize, Vec<BoundReport>, bool))> = (0..instance_count)
        .into_par_iter()
        .map(|i| {
            let inst = random_instance(seed, i);
            let out = check_instance(&inst);
            (inst, out)
        })
        .collect();
    let mut summary = SweepSummary {
        instances: instance_count,
        ..Default::default()
    };
    for (inst, (checks, failed, fixed)) in results {
        summary.checks += checks;
        if fixed {
            summary.p_fixed_points += 1;
        } else {
            summary.p_brackets += 1;
        }
        for report in failed {
            summary.violations.push(Violation {
                instance: inst.index,
                mdp_seed: inst.seed,
                description: inst.describe(),
                report,
            });
        }
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_reproducible() {
        let a = random_instance(3, 5);
        let b = random_instance(3, 5);
        assert_eq!(a.mdp, b.mdp);
        assert_eq!(a.learner, b.learner);
        assert!(a.learner.is_valid());
    }

    #[test]
    fn small_sweep_holds() {
        let s = bounds_sweep(10, 1);
        assert!(s.all_hold(), "{:?}", s.violations);
        assert_eq!(s.p_fixed_points + s.p_brackets, 10);
    }

    #[test]
    fn empty_sweep() {
        let s = bounds_sweep(0, 1);
        assert!(s.all_hold());
        assert_eq!(s.checks, 0);
    }
}
