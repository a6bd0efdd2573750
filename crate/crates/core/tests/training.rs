//! Monte Carlo behavior of the training loop against exact DP quantities.

use adapmen_core::analysis::{random_policy, teacher_stats};
use adapmen_core::envs::{make_random_mdp, EnvSpec};
use adapmen_core::gating::{init_p, CriterionKind, Gate, InterventionCriterion};
use adapmen_core::mdp::{tv_divergence, value_iteration_finite, PolicyTable};
use adapmen_core::training::{
    fit_mle, rollout_episode, train_adapmen, train_bc, train_dagger, Algorithm, EpsbEstimator, InterventionBuffer,
    Learner, LearnerConfig, Sample, TrainConfig,
};
use adapmen_core::SeededRng;

fn cliff_config(width: usize, horizon: usize) -> TrainConfig {
    TrainConfig {
        env: EnvSpec::Cliffwalk {
            width,
            horizon,
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
    }
}

#[test]
fn monte_carlo_return_and_delta_match_dp() {
    let m = make_random_mdp(6, 3, 5, 77, 0.2).unwrap();
    let (q, pi) = value_iteration_finite(&m);
    let gate = Gate::new(CriterionKind::QDiff, q, pi);
    let learner = random_policy(6, 3, &mut SeededRng::new(5));
    let p = 0.5;
    let exact = teacher_stats(&m, &gate, &learner, p);

    let mut rng = SeededRng::new(99);
    let mut buffer = InterventionBuffer::new(None);
    let episodes = 12_000;
    let mut returns = Vec::with_capacity(episodes);
    let mut interventions = 0usize;
    for _ in 0..episodes {
        let trace = rollout_episode(&m, &learner, &gate, p, &mut buffer, &mut rng);
        interventions += trace.steps.iter().filter(|s| s.intervened).count();
        returns.push(trace.episode_return);
    }
    let n = episodes as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!((mean - exact.j_teacher).abs() <= 3.0 * se, "{mean} vs {} (se {se})", exact.j_teacher);

    let delta_hat = interventions as f64 / (n * 5.0);
    assert!((delta_hat - exact.delta).abs() < 0.02, "{delta_hat} vs {}", exact.delta);

    // Buffer purity: every label is the expert's action at its timestep.
    for s in buffer.iter() {
        assert_eq!(s.action, gate.pi_star.action(s.h, s.state));
    }
}

#[test]
fn adapmen_converges_on_cliffwalk() {
    let config = cliff_config(8, 16);
    for seed in 0..10 {
        let out = train_adapmen(&config, seed, false).unwrap();
        let last = out.metrics.last().unwrap();
        assert!(last.suboptimality_gap < 0.05 * 16.0, "seed {seed}: {last:?}");
        for m in &out.metrics {
            assert!((0.0..=1.0).contains(&m.delta_estimate));
            assert!(m.p.is_finite() && m.p >= 0.0);
            assert!(m.j_teacher >= m.j_expert - m.p * 16.0 - 1e-9, "{m:?}");
        }
    }
}

#[test]
fn warmup_threshold_is_positive_for_an_untrained_learner() {
    let mut config = cliff_config(8, 16);
    config.steps = 200;
    config.update_interval = 1000;
    let out = train_adapmen(&config, 3, true).unwrap();
    let m = config.env.build().unwrap();
    let gaps: Vec<f64> = out.steps.iter().map(|s| s.gap).collect();
    let learner = Learner::new(LearnerConfig::default(), m.num_states(), m.num_actions());
    let loss = learner.estimate_epsb(&out.buffer).unwrap();
    let p = init_p(&gaps, loss, 16).unwrap();
    assert!(p.is_finite() && p > 0.0);
}

#[test]
fn runs_are_deterministic() {
    let mut config = cliff_config(6, 10);
    config.steps = 3000;
    config.learner.label_noise = 0.1;
    let a = train_adapmen(&config, 8, true).unwrap();
    let b = train_adapmen(&config, 8, true).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.steps, b.steps);
    assert_eq!(a.learner, b.learner);
}

#[test]
fn zero_q_noise_matches_baseline() {
    let mut config = cliff_config(6, 10);
    config.steps = 3000;
    let base = train_adapmen(&config, 4, false).unwrap();
    config.q_noise = 0.0;
    assert_eq!(base.metrics, train_adapmen(&config, 4, false).unwrap().metrics);
    config.q_noise = 10.0;
    let noisy = train_adapmen(&config, 4, false).unwrap();
    assert_ne!(base.metrics, noisy.metrics);
}

/// `Pr(Binomial(n, 1/2) < n/2)` plus the tie mass when the tie goes to the
/// other action.
fn argmax_mismatch_expectation(n: u64, tie_goes_wrong: bool) -> f64 {
    let binom = |k: u64| -> f64 {
        let mut c = 1.0;
        for i in 0..k {
            c *= (n - i) as f64 / (i + 1) as f64;
        }
        c / 2f64.powi(n as i32)
    };
    let mut total = 0.0;
    for k in 0..=n {
        if 2 * k < n || (2 * k == n && tie_goes_wrong) {
            total += binom(k);
        }
    }
    total
}

#[test]
fn half_label_noise_mismatch_matches_binomial_expectation() {
    let states = 4000;
    let per_state = 4;
    let mut buffer = InterventionBuffer::new(None);
    for s in 0..states {
        for _ in 0..per_state {
            buffer.push(Sample { state: s, action: 0, h: 1 });
        }
    }
    let mut rng = SeededRng::new(12);
    let policy = fit_mle(&buffer, states, 2, 1e-6, 0.5, &mut rng);
    let argmax_rate = (0..states).filter(|&s| policy.argmax(s) != 0).count() as f64 / states as f64;
    // Ties break toward action 0, which is the label here.
    let want = argmax_mismatch_expectation(per_state, false);
    assert!((want - 0.3125).abs() < 1e-15);
    let se = (want * (1.0 - want) / states as f64).sqrt();
    assert!((argmax_rate - want).abs() < 4.0 * se, "{argmax_rate} vs {want}");

    let mut learner = Learner::new(
        LearnerConfig {
            label_noise: 0.5,
            smoothing: 1e-6,
            epsb_estimator: EpsbEstimator::Mismatch,
            ..LearnerConfig::default()
        },
        states,
        2,
    );
    learner.fit(&buffer, &mut rng);
    let mismatch = learner.estimate_epsb(&buffer).unwrap();
    assert!((mismatch - 0.5).abs() < 0.02, "{mismatch}");
}

#[test]
fn baselines_use_expected_label_counts() {
    let mut config = cliff_config(6, 10);
    config.steps = 2000;
    let bc = train_bc(&config, 1, true).unwrap();
    assert!(bc.metrics.iter().all(|m| m.expert_action_usage == m.env_steps));
    assert!(bc.steps.iter().all(|s| s.executed_action == s.expert_action.unwrap()));
    let dagger = train_dagger(&config, 1, true).unwrap();
    assert!(dagger.steps.iter().all(|s| s.executed_action == s.learner_action));
    assert_eq!(dagger.buffer.len(), 2000);
    let expert = value_iteration_finite(&config.env.build().unwrap()).1;
    let final_policy: &PolicyTable = &dagger.learner;
    for s in 0..6 {
        assert!(tv_divergence(final_policy.row(s), expert_row(&expert, s)).unwrap() < 0.01);
    }
}

fn expert_row(pi: &adapmen_core::mdp::GreedyPolicy, s: usize) -> &[f64] {
    use adapmen_core::mdp::Policy;
    pi.probs(1, s)
}
