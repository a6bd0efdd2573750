//! Verification suites behind `adapmen verify`.

use adapmen_core::analysis::{
    bounds_sweep, dq_tail_analysis, random_instance, scaling_experiment, verify_p_choice, ScalingOutcome,
    SweepSummary, TailReport, TailWeighting,
};
use adapmen_core::envs::EnvSpec;
use adapmen_core::gating::{CriterionKind, Gate, InterventionCriterion};
use adapmen_core::mdp::value_iteration_finite;
use adapmen_core::training::{Algorithm, LearnerConfig, TrainConfig, TrainError};
use adapmen_core::SeededRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// BC's gap must grow at least this fast in `H` (log-log slope).
pub const BC_MIN_SLOPE: f64 = 1.7;
/// AdapMen's gap must grow at most this fast.
pub const ADAPMEN_MAX_SLOPE: f64 = 1.3;

pub fn bounds_suite(instance_count: usize, seed: u64) -> SweepSummary {
    bounds_sweep(instance_count, seed)
}

/// Per-instance tail check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub instance: usize,
    pub mdp_seed: u64,
    /// Teacher threshold from the self-consistent p search.
    pub p: f64,
    pub monotone: bool,
    pub reproducible: bool,
    /// Grid points where the empirical survival is under the envelope.
    pub envelope_satisfied: usize,
    pub report: TailReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailsSummary {
    pub instances: usize,
    pub samples_per_instance: usize,
    pub checks: Vec<TailCheck>,
}

impl TailsSummary {
    /// Monotone and reproducible everywhere. The envelope comparison is
    /// reported but not required: sub-exponential tails are an assumption.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.monotone && c.reproducible)
    }
}

/// `D_Q` tails on random instances, weighted by the teacher at its
/// self-consistent threshold.
pub fn tails_suite(instance_count: usize, seed: u64, samples: usize) -> TailsSummary {
    let checks = (0..instance_count)
        .into_par_iter()
        .map(|i| {
            let inst = random_instance(seed, i);
            let (q, pi) = value_iteration_finite(&inst.mdp);
            let gate = Gate::new(CriterionKind::QDiff, q, pi);
            let p = verify_p_choice(&inst.mdp, &gate, &inst.learner).p;
            let sample_seed = SeededRng::derive_seed(inst.seed, 0x7A11);
            let weighting = TailWeighting::Teacher { p };
            let report = dq_tail_analysis(&inst.mdp, &gate, &inst.learner, weighting, samples, sample_seed);
            let again = dq_tail_analysis(&inst.mdp, &gate, &inst.learner, weighting, samples, sample_seed);
            TailCheck {
                instance: i,
                mdp_seed: inst.seed,
                p,
                monotone: report.survival_is_monotone(),
                reproducible: report == again && report.samples == again.samples,
                envelope_satisfied: report.grid.iter().filter(|g| g.satisfied).count(),
                report,
            }
        })
        .collect();
    TailsSummary {
        instances: instance_count,
        samples_per_instance: samples,
        checks,
    }
}

/// The growth-rate experiment: slip-free cliff walk, label noise 0.1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSetup {
    pub base: TrainConfig,
    pub horizons: Vec<usize>,
    pub seeds: Vec<u64>,
    pub label_noise: f64,
}

impl Default for ScalingSetup {
    fn default() -> Self {
        Self {
            base: TrainConfig {
                env: EnvSpec::Cliffwalk {
                    width: 8,
                    horizon: 8,
                    slip: 0.0,
                },
                algorithm: Algorithm::Adapmen,
                criterion: InterventionCriterion {
                    kind: CriterionKind::QDiff,
                    p: 0.0,
                    adaptive: true,
                    warmup_steps: 200,
                },
                learner: LearnerConfig::default(),
                steps: 20_000,
                update_interval: 200,
                buffer_capacity: None,
                q_noise: 0.0,
            },
            horizons: vec![8, 16, 32, 64],
            seeds: (0..10).collect(),
            label_noise: 0.1,
        }
    }
}

impl ScalingSetup {
    pub fn run(&self) -> Result<ScalingOutcome, TrainError> {
        let algorithms = [Algorithm::Bc, Algorithm::Adapmen, Algorithm::Dagger];
        scaling_experiment(&self.base, &self.horizons, &algorithms, &self.seeds, self.label_noise)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingVerdict {
    pub bc_slope: Option<f64>,
    pub adapmen_slope: Option<f64>,
    pub adapmen_teacher_slope: Option<f64>,
    pub bc_ok: bool,
    pub adapmen_ok: bool,
    pub dagger_envelope_holds: bool,
    pub dagger_envelope_checks: usize,
}

impl ScalingVerdict {
    pub fn new(outcome: &ScalingOutcome) -> Self {
        let report = |a: Algorithm| outcome.reports.iter().find(|r| r.algorithm == a && !r.degenerate);
        let bc_slope = report(Algorithm::Bc).map(|r| r.slope);
        let adapmen = report(Algorithm::Adapmen);
        let adapmen_slope = adapmen.map(|r| r.slope);
        Self {
            bc_slope,
            adapmen_slope,
            adapmen_teacher_slope: adapmen.and_then(|r| r.teacher_slope),
            bc_ok: bc_slope.is_some_and(|s| s >= BC_MIN_SLOPE),
            adapmen_ok: adapmen_slope.is_some_and(|s| s <= ADAPMEN_MAX_SLOPE),
            dagger_envelope_holds: outcome.dagger_envelope.iter().all(|e| e.report.holds),
            dagger_envelope_checks: outcome.dagger_envelope.len(),
        }
    }

    pub fn passed(&self) -> bool {
        self.bc_ok && self.adapmen_ok && self.dagger_envelope_holds
    }
}

/// Short human-readable lines for a bounds sweep.
pub fn describe_sweep(s: &SweepSummary) -> Vec<String> {
    let mut lines = vec![format!(
        "bounds: {} instances, {} checks, {} violations (threshold search: {} fixed points, {} brackets)",
        s.instances,
        s.checks,
        s.violations.len(),
        s.p_fixed_points,
        s.p_brackets
    )];
    for v in &s.violations {
        lines.push(format!(
            "  VIOLATION {}: {} lhs={} rhs={} slack={}",
            v.description, v.report.name, v.report.lhs, v.report.rhs, v.report.slack
        ));
    }
    lines
}
