//! Backward induction and forward occupancy propagation.

use super::{GreedyPolicy, OccupancyTable, Policy, QTable, TabularMdp};

/// Optimal `Q*` by backward induction and its greedy (time-indexed) policy.
pub fn value_iteration_finite(mdp: &TabularMdp) -> (QTable, GreedyPolicy) {
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut q = QTable::zeros(horizon, ns, na);
    // v[s'] = max_a' Q*_{h+1}(s', a'); zero past the horizon.
    let mut v = vec![0.0; ns];
    for h in (1..=horizon).rev() {
        for s in 0..ns {
            for a in 0..na {
                let next: f64 = mdp.transition_row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
                q.row_mut(h, s)[a] = mdp.reward(s, a) + next;
            }
        }
        for (s, vs) in v.iter_mut().enumerate() {
            *vs = q.row(h, s).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    let greedy = GreedyPolicy::from_q(&q);
    (q, greedy)
}

/// `Q^π` by backward induction.
pub fn policy_q<P: Policy + ?Sized>(mdp: &TabularMdp, pi: &P) -> QTable {
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut q = QTable::zeros(horizon, ns, na);
    let mut v = vec![0.0; ns];
    for h in (1..=horizon).rev() {
        for s in 0..ns {
            for a in 0..na {
                let next: f64 = mdp.transition_row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
                q.row_mut(h, s)[a] = mdp.reward(s, a) + next;
            }
        }
        for (s, vs) in v.iter_mut().enumerate() {
            *vs = q.expected(h, s, pi.probs(h, s));
        }
    }
    q
}

/// `J(π) = Σ_s ρ(s) Σ_a π(a|s) Q^π_1(s, a)`.
pub fn policy_value<P: Policy + ?Sized>(mdp: &TabularMdp, pi: &P) -> f64 {
    let q = policy_q(mdp, pi);
    mdp.initial()
        .iter()
        .enumerate()
        .map(|(s, rho)| rho * q.expected(1, s, pi.probs(1, s)))
        .sum()
}

/// `d_1 = ρ`, `d_{h+1}(s') = Σ_{s,a} d_h(s) π_h(a|s) P(s'|s,a)`.
pub fn occupancy<P: Policy + ?Sized>(mdp: &TabularMdp, pi: &P) -> OccupancyTable {
    let (ns, horizon) = (mdp.num_states(), mdp.horizon());
    let mut d = Vec::with_capacity(ns * horizon);
    d.extend_from_slice(mdp.initial());
    for h in 1..horizon {
        let cur = d[(h - 1) * ns..h * ns].to_vec();
        let mut next = vec![0.0; ns];
        for (s, &ds) in cur.iter().enumerate() {
            if ds == 0.0 {
                continue;
            }
            for (a, &pa) in pi.probs(h, s).iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                for (acc, &pt) in next.iter_mut().zip(mdp.transition_row(s, a)) {
                    *acc += ds * pa * pt;
                }
            }
        }
        d.extend(next);
    }
    OccupancyTable {
        horizon,
        num_states: ns,
        d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::PolicyTable;

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
    fn two_state_optimal_values() {
        let (q, pi) = value_iteration_finite(&two_state());
        assert_eq!(q.get(1, 0, 0), 2.0);
        assert_eq!(q.get(1, 0, 1), 1.0);
        assert_eq!(pi.action(1, 0), 0);
        assert_eq!(policy_value(&two_state(), &pi), 2.0);
    }

    #[test]
    fn policy_q_of_suboptimal_action() {
        let m = two_state();
        let pi = PolicyTable::deterministic(2, &[1, 0]);
        let q = policy_q(&m, &pi);
        assert_eq!(q.get(1, 0, 0), 1.0);
        assert_eq!(q.get(1, 0, 1), 0.0);
        assert_eq!(policy_value(&m, &pi), 0.0);
    }

    #[test]
    fn horizon_one_is_reward() {
        let m = two_state().with_horizon(1);
        let (q, _) = value_iteration_finite(&m);
        for s in 0..2 {
            for a in 0..2 {
                assert_eq!(q.get(1, s, a), m.reward(s, a));
            }
        }
    }

    #[test]
    fn optimal_policy_q_matches_optimal_q() {
        let m = two_state();
        let (q, pi) = value_iteration_finite(&m);
        assert_eq!(policy_q(&m, &pi), q);
    }

    #[test]
    fn occupancy_starts_at_initial() {
        let m = two_state();
        let d = occupancy(&m, &PolicyTable::uniform(2, 2));
        assert_eq!(d.row(1), m.initial());
        assert_eq!(d.row(2), &[1.0, 0.0]);
        assert_eq!(d.averaged(), vec![1.0, 0.0]);
    }
}
