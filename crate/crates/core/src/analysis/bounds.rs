//! Exact-DP checks of the sub-optimality bounds.
//!
//! Every quantity here comes from dynamic programming, never from sampling,
//! so a failed check is a numerical fact up to [`BOUND_TOL`].

use serde::{Deserialize, Serialize};

use crate::gating::{dq_gap, Gate};
use crate::mdp::{
    occupancy, policy_q, policy_value, tv_divergence, GreedyPolicy, Policy, PolicyTable, QTable, TabularMdp,
};

/// Slack below which a bound counts as violated.
pub const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsb: Option<f64>,
    pub horizon: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

/// `lhs ≤ rhs` (or `lhs = rhs` for identities), with `slack = rhs - lhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
    pub inputs: BoundInputs,
}

impl BoundReport {
    pub fn inequality(name: &str, lhs: f64, rhs: f64, inputs: BoundInputs) -> Self {
        let slack = rhs - lhs;
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            slack,
            holds: slack >= -BOUND_TOL,
            inputs,
        }
    }

    /// Equality: the slack is `-|lhs - rhs|`.
    pub fn equality(name: &str, lhs: f64, rhs: f64, inputs: BoundInputs) -> Self {
        let slack = -(lhs - rhs).abs();
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            slack,
            holds: slack >= -BOUND_TOL,
            inputs,
        }
    }
}

/// Exact statistics of the switching teacher at threshold `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherStats {
    /// `(1/H) Σ_h Σ_s d_h^{π′}(s) · 1[gap > p]`.
    pub delta: f64,
    /// Buffer distribution over `(h, s)`, `beta[(h - 1) * S + s]`; all zero
    /// when `delta == 0`.
    pub beta: Vec<f64>,
    /// `Σ β(h, s) · TV(π(s), π*_h(s))`.
    pub epsb: f64,
    pub j_teacher: f64,
}

impl TeacherStats {
    /// Buffer distribution marginalized over timesteps.
    pub fn state_beta(&self, num_states: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_states];
        for (i, b) in self.beta.iter().enumerate() {
            out[i % num_states] += b;
        }
        out
    }
}

pub fn teacher_stats(mdp: &TabularMdp, gate: &Gate, learner: &PolicyTable, p: f64) -> TeacherStats {
    let (ns, horizon) = (mdp.num_states(), mdp.horizon());
    let teacher = gate.teacher_policy(learner, p);
    let fires = gate.firing_table(learner, p);
    let d = occupancy(mdp, &teacher);
    let mut mass = vec![0.0; horizon * ns];
    for h in 1..=horizon {
        for s in 0..ns {
            let i = (h - 1) * ns + s;
            if fires[i] {
                mass[i] = d.at(h, s);
            }
        }
    }
    let total: f64 = mass.iter().sum();
    let delta = total / horizon as f64;
    let beta: Vec<f64> = if total > 0.0 {
        mass.iter().map(|m| m / total).collect()
    } else {
        mass
    };
    let mut epsb = 0.0;
    for h in 1..=horizon {
        for s in 0..ns {
            let b = beta[(h - 1) * ns + s];
            if b > 0.0 {
                epsb += b * tv_divergence(learner.row(s), gate.pi_star.probs(h, s)).expect("same width");
            }
        }
    }
    TeacherStats {
        delta,
        beta,
        epsb,
        j_teacher: policy_value(mdp, &teacher),
    }
}

/// `J* - J(π) ≤ pH + δ ε_b H²` with `δ`, `ε_b` of the teacher at `p` and
/// the TV loss.
pub fn verify_thm_suboptimality(mdp: &TabularMdp, gate: &Gate, learner: &PolicyTable, p: f64) -> BoundReport {
    let horizon = mdp.horizon() as f64;
    let j_star = policy_value(mdp, &gate.pi_star);
    let stats = teacher_stats(mdp, gate, learner, p);
    let lhs = j_star - policy_value(mdp, learner);
    let rhs = p * horizon + stats.delta * stats.epsb * horizon * horizon;
    BoundReport::inequality(
        "suboptimality",
        lhs,
        rhs,
        BoundInputs {
            p: Some(p),
            delta: Some(stats.delta),
            epsb: Some(stats.epsb),
            horizon: mdp.horizon(),
            mu: None,
        },
    )
}

/// `J(π′) ≥ J* - pH`, reported as `lhs = J* - pH`, `rhs = J(π′)`.
pub fn verify_safety(mdp: &TabularMdp, gate: &Gate, learner: &PolicyTable, p: f64) -> BoundReport {
    let j_star = policy_value(mdp, &gate.pi_star);
    let j_teacher = policy_value(mdp, &gate.teacher_policy(learner, p));
    BoundReport::inequality(
        "safety",
        j_star - p * mdp.horizon() as f64,
        j_teacher,
        BoundInputs {
            p: Some(p),
            horizon: mdp.horizon(),
            ..Default::default()
        },
    )
}

/// One `(s, h)` check of `D_Q ≤ TV · (H - h + 1)` (and optionally Pinsker).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBound {
    pub h: usize,
    pub state: usize,
    pub report: BoundReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceBoundReport {
    pub per_state: Vec<StateBound>,
    pub holds: bool,
    /// Smallest slack over all `(s, h)`.
    pub min_slack: f64,
}

fn collect(per_state: Vec<StateBound>) -> DivergenceBoundReport {
    let holds = per_state.iter().all(|b| b.report.holds);
    let min_slack = per_state.iter().map(|b| b.report.slack).fold(f64::INFINITY, f64::min);
    DivergenceBoundReport {
        per_state,
        holds,
        min_slack,
    }
}

/// `D_Q(s, h) ≤ TV(π*_h(s), π(s)) · (H - h + 1)` at every `(s, h)`.
pub fn verify_policy_divergence_bound(
    q_star: &QTable,
    pi_star: &GreedyPolicy,
    learner: &PolicyTable,
) -> DivergenceBoundReport {
    let horizon = q_star.horizon();
    let mut per_state = Vec::new();
    for h in 1..=horizon {
        for s in 0..learner.num_states() {
            let gap = dq_gap(q_star, pi_star, learner.row(s), s, h);
            let tv = crate::gating::surrogate_gap_tv(pi_star, learner.row(s), s, h, horizon);
            per_state.push(StateBound {
                h,
                state: s,
                report: BoundReport::inequality(
                    "divergence",
                    gap,
                    tv,
                    BoundInputs {
                        horizon,
                        ..Default::default()
                    },
                ),
            });
        }
    }
    collect(per_state)
}

/// `TV · (H - h + 1) ≤ sqrt(KL) · (H - h + 1)` at every `(s, h)`.
pub fn verify_pinsker_surrogates(pi_star: &GreedyPolicy, learner: &PolicyTable) -> DivergenceBoundReport {
    let horizon = pi_star.horizon();
    let mut per_state = Vec::new();
    for h in 1..=horizon {
        for s in 0..learner.num_states() {
            let tv = crate::gating::surrogate_gap_tv(pi_star, learner.row(s), s, h, horizon);
            let kl = crate::gating::surrogate_gap_sqrt_kl(pi_star, learner.row(s), s, h, horizon);
            per_state.push(StateBound {
                h,
                state: s,
                report: BoundReport::inequality(
                    "pinsker",
                    tv,
                    kl,
                    BoundInputs {
                        horizon,
                        ..Default::default()
                    },
                ),
            });
        }
    }
    collect(per_state)
}

/// `J(π1) - J(π2) = Σ_h E_{d_h^{π1}} [Q^{π2}_h(s, π1) - Q^{π2}_h(s, π2)]`.
pub fn verify_policy_difference_lemma<P1, P2>(mdp: &TabularMdp, pi1: &P1, pi2: &P2) -> BoundReport
where
    P1: Policy + ?Sized,
    P2: Policy + ?Sized,
{
    let lhs = policy_value(mdp, pi1) - policy_value(mdp, pi2);
    let q2 = policy_q(mdp, pi2);
    let d1 = occupancy(mdp, pi1);
    let mut rhs = 0.0;
    for h in 1..=mdp.horizon() {
        for s in 0..mdp.num_states() {
            let w = d1.at(h, s);
            if w > 0.0 {
                rhs += w * (q2.expected(h, s, pi1.probs(h, s)) - q2.expected(h, s, pi2.probs(h, s)));
            }
        }
    }
    BoundReport::equality(
        "policy_difference",
        lhs,
        rhs,
        BoundInputs {
            horizon: mdp.horizon(),
            ..Default::default()
        },
    )
}

/// `J* - J(π) ≤ μ H ε_b` with `ε_b = (1/H) Σ_h E_{d_h^π} TV(π(s), π*_h(s))`
/// (the DAgger guarantee under μ-recoverability).
pub fn verify_dagger_envelope(mdp: &TabularMdp, gate: &Gate, learner: &PolicyTable) -> BoundReport {
    let horizon = mdp.horizon();
    let mu = crate::envs::mu_recoverability(&gate.q, &gate.pi_star);
    let d = occupancy(mdp, learner);
    let mut epsb = 0.0;
    for h in 1..=horizon {
        for s in 0..mdp.num_states() {
            let w = d.at(h, s);
            if w > 0.0 {
                epsb += w * tv_divergence(learner.row(s), gate.pi_star.probs(h, s)).expect("same width");
            }
        }
    }
    epsb /= horizon as f64;
    let j_star = policy_value(mdp, &gate.pi_star);
    BoundReport::inequality(
        "dagger_envelope",
        j_star - policy_value(mdp, learner),
        mu * horizon as f64 * epsb,
        BoundInputs {
            epsb: Some(epsb),
            horizon,
            mu: Some(mu),
            ..Default::default()
        },
    )
}

/// Result of solving `p = δ(p) ε_b(p) H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PChoiceReport {
    /// Threshold the envelope is checked at.
    pub p: f64,
    /// `true` if `p` is an exact fixed point; otherwise `F` jumps across
    /// the diagonal inside `bracket` and `p` is its upper end, where
    /// `δ ε_b H ≤ p` still holds.
    pub fixed_point: bool,
    pub bracket: [f64; 2],
    /// `J* - J(π) ≤ 2pH`.
    pub report: BoundReport,
}

/// Solves `p = F(p) := δ(p) ε_b(p) H` by bisection on `g(p) = p - F(p)`
/// over `[0, H]` and checks the `2pH` envelope.
///
/// `F` is piecewise constant in `p` (it only changes where `p` crosses a gap
/// value), so bisection either lands inside a constant piece containing
/// the fixed point or isolates a jump across the diagonal.
pub fn verify_p_choice(mdp: &TabularMdp, gate: &Gate, learner: &PolicyTable) -> PChoiceReport {
    let horizon = mdp.horizon() as f64;
    let f = |p: f64| {
        let st = teacher_stats(mdp, gate, learner, p);
        st.delta * st.epsb * horizon
    };
    let (mut lo, mut hi) = (0.0, horizon);
    let (mut f_lo, mut f_hi) = (f(lo), f(hi));
    // Gaps never exceed H (surrogates can be infinite; grow until g > 0).
    while hi - f_hi <= 0.0 && hi.is_finite() {
        hi *= 2.0;
        f_hi = f(hi);
    }
    if lo - f_lo >= 0.0 {
        // F(0) = 0: p = 0 is the fixed point.
        hi = lo;
        f_hi = f_lo;
    }
    let is_fixed = |c: f64| f(c) == c;
    for _ in 0..200 {
        if hi - lo <= 1e-13 * horizon.max(1.0) || (f_lo == f_hi && is_fixed(f_lo)) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if mid - f_mid > 0.0 {
            hi = mid;
            f_hi = f_mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    let (p, fixed_point) = if lo <= f_lo && f_lo <= hi && is_fixed(f_lo) {
        (f_lo, true)
    } else {
        (hi, false)
    };
    let st = teacher_stats(mdp, gate, learner, p);
    let j_star = policy_value(mdp, &gate.pi_star);
    let report = BoundReport::inequality(
        "p_choice",
        j_star - policy_value(mdp, learner),
        2.0 * p * horizon,
        BoundInputs {
            p: Some(p),
            delta: Some(st.delta),
            epsb: Some(st.epsb),
            horizon: mdp.horizon(),
            mu: None,
        },
    );
    PChoiceReport {
        p,
        fixed_point,
        bracket: [lo, hi],
        report,
    }
}
