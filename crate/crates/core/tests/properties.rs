//! Randomized invariants over generated MDPs and policies.

use adapmen_core::analysis::{
    random_policy, teacher_stats, verify_p_choice, verify_policy_difference_lemma, verify_policy_divergence_bound,
    verify_safety, verify_thm_suboptimality,
};
use adapmen_core::envs::make_random_mdp;
use adapmen_core::gating::{should_intervene, surrogate_gap_sqrt_kl, surrogate_gap_tv, CriterionKind, Gate};
use adapmen_core::mdp::{
    dump_text, kl_divergence, occupancy, parse_text, policy_q, policy_value, tv_divergence, value_iteration_finite,
    PolicyTable, TabularMdp,
};
use adapmen_core::training::fit_eg_step;
use adapmen_core::SeededRng;
use proptest::prelude::*;

fn instance(seed: u64, ns: usize, na: usize, horizon: usize) -> (TabularMdp, PolicyTable, PolicyTable) {
    let m = make_random_mdp(ns, na, horizon, seed, 0.3).unwrap();
    let mut rng = SeededRng::new(seed ^ 0x5eed);
    let a = random_policy(ns, na, &mut rng);
    let b = random_policy(ns, na, &mut rng);
    (m, a, b)
}

fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, len).prop_map(|w| {
        let total: f64 = w.iter().sum();
        if total == 0.0 {
            let mut one = vec![0.0; w.len()];
            one[0] = 1.0;
            one
        } else {
            w.into_iter().map(|x| x / total).collect()
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn policy_difference_identity(seed in any::<u64>(), ns in 2usize..6, na in 2usize..4, h in 1usize..8) {
        let (m, a, b) = instance(seed, ns, na, h);
        let r = verify_policy_difference_lemma(&m, &a, &b);
        prop_assert!(r.holds, "{:?}", r);
    }

    #[test]
    fn pinsker(pair in (2usize..6).prop_flat_map(|n| (distribution(n), distribution(n)))) {
        let (p, q) = pair;
        let tv = tv_divergence(&p, &q).unwrap();
        let kl = kl_divergence(&p, &q).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&tv));
        prop_assert!(tv <= kl.sqrt() + 1e-12);
    }

    #[test]
    fn occupancy_rows_are_distributions(seed in any::<u64>(), ns in 2usize..6, na in 2usize..4, h in 1usize..10) {
        let (m, a, _) = instance(seed, ns, na, h);
        let d = occupancy(&m, &a);
        for t in 1..=h {
            prop_assert!((d.row(t).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        prop_assert_eq!(d.row(1), m.initial());
    }

    #[test]
    fn optimal_policy_is_a_fixed_point_and_improves(seed in any::<u64>(), ns in 2usize..6, na in 2usize..4, h in 1usize..8) {
        let (m, a, _) = instance(seed, ns, na, h);
        let (q, pi) = value_iteration_finite(&m);
        let q_pi = policy_q(&m, &pi);
        for (x, y) in q.values().iter().zip(q_pi.values()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        let improved = adapmen_core::mdp::GreedyPolicy::from_q(&policy_q(&m, &a));
        prop_assert!(policy_value(&m, &improved) >= policy_value(&m, &a) - 1e-9);
        prop_assert!(policy_value(&m, &pi) >= policy_value(&m, &improved) - 1e-9);
        let j = policy_value(&m, &a);
        prop_assert!((-1e-12..=h as f64 + 1e-12).contains(&j));
    }

    #[test]
    fn surrogates_dominate_the_gap(seed in any::<u64>(), ns in 2usize..6, na in 2usize..4, h in 1usize..8) {
        let (m, a, _) = instance(seed, ns, na, h);
        let (q, pi) = value_iteration_finite(&m);
        prop_assert!(verify_policy_divergence_bound(&q, &pi, &a).holds);
        for t in 1..=h {
            for s in 0..ns {
                let tv = surrogate_gap_tv(&pi, a.row(s), s, t, h);
                let kl = surrogate_gap_sqrt_kl(&pi, a.row(s), s, t, h);
                prop_assert!(tv <= kl + 1e-12);
            }
        }
    }

    #[test]
    fn bounds_hold_on_a_threshold_grid(seed in any::<u64>(), ns in 2usize..6, na in 2usize..4, h in 1usize..8) {
        let (m, a, _) = instance(seed, ns, na, h);
        let (q, pi) = value_iteration_finite(&m);
        let gate = Gate::new(CriterionKind::QDiff, q, pi);
        for i in 0..=10 {
            let p = i as f64 / 10.0 * h as f64;
            let r = verify_thm_suboptimality(&m, &gate, &a, p);
            prop_assert!(r.holds, "{:?}", r);
            let r = verify_safety(&m, &gate, &a, p);
            prop_assert!(r.holds, "{:?}", r);
        }
        let zero = teacher_stats(&m, &gate, &a, 0.0);
        prop_assert!((zero.j_teacher - policy_value(&m, &gate.pi_star)).abs() < 1e-9);
        let pc = verify_p_choice(&m, &gate, &a);
        prop_assert!(pc.report.holds, "{:?}", pc);
    }

    #[test]
    fn gate_is_monotone(gap in 0.0f64..10.0, extra in 0.0f64..5.0, p in 0.0f64..10.0) {
        if should_intervene(p, gap) {
            prop_assert!(should_intervene(p, gap + extra));
            prop_assert!(should_intervene((p - extra).max(0.0), gap));
        }
    }

    #[test]
    fn eg_stays_on_the_simplex(w in distribution(4), z in prop::collection::vec(0.0f64..=1.0, 4)) {
        let mut w = w;
        fit_eg_step(&mut w, &z, 0.5).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn text_format_round_trips(seed in any::<u64>(), ns in 2usize..6, na in 2usize..4, h in 1usize..8) {
        let (m, _, _) = instance(seed, ns, na, h);
        let text = dump_text(&m);
        prop_assert_eq!(parse_text(&text).unwrap(), m);
    }
}
