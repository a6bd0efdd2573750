//! Brute-force reference values for small MDPs.
//!
//! Nothing here shares code with the backward-induction routines: every
//! value is a sum over explicitly enumerated trajectories, each weighted by
//! the product of its transition and action probabilities.

use adapmen_core::mdp::{Policy, TabularMdp};

/// Number of `(state, action)` trajectories of `steps` steps.
pub fn trajectory_count(mdp: &TabularMdp, steps: usize) -> usize {
    (mdp.num_states() * mdp.num_actions()).pow(steps as u32)
}

/// Visits every trajectory `(s_1, a_1, ..., s_k, a_k)` with `k = steps`
/// as an odometer over `(state, action)` digits; `visit(states, actions)`
/// sees each one once.
fn for_each_trajectory<F: FnMut(&[usize], &[usize])>(mdp: &TabularMdp, steps: usize, mut visit: F) {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut states = vec![0; steps];
    let mut actions = vec![0; steps];
    loop {
        visit(&states, &actions);
        let mut i = steps;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            actions[i] += 1;
            if actions[i] < na {
                break;
            }
            actions[i] = 0;
            states[i] += 1;
            if states[i] < ns {
                break;
            }
            states[i] = 0;
        }
    }
}

/// Expected return of the trajectory suffix that starts at `(s, a)` at
/// timestep `h` and then follows `pi` until `H`.
pub fn enumerate_q<P: Policy + ?Sized>(mdp: &TabularMdp, pi: &P, h: usize, s: usize, a: usize) -> f64 {
    let horizon = mdp.horizon();
    let tail = horizon - h;
    let mut total = 0.0;
    for_each_trajectory(mdp, tail, |states, actions| {
        let mut prob = 1.0;
        let mut ret = mdp.reward(s, a);
        let (mut prev_s, mut prev_a) = (s, a);
        for k in 0..tail {
            let t = h + 1 + k;
            prob *= mdp.transition_row(prev_s, prev_a)[states[k]];
            prob *= pi.probs(t, states[k])[actions[k]];
            if prob == 0.0 {
                return;
            }
            ret += mdp.reward(states[k], actions[k]);
            prev_s = states[k];
            prev_a = actions[k];
        }
        total += prob * ret;
    });
    total
}

/// `J(π)` as the probability-weighted return of every full trajectory.
pub fn enumerate_value<P: Policy + ?Sized>(mdp: &TabularMdp, pi: &P) -> f64 {
    let horizon = mdp.horizon();
    let mut total = 0.0;
    for_each_trajectory(mdp, horizon, |states, actions| {
        let mut prob = mdp.initial()[states[0]];
        let mut ret = 0.0;
        for k in 0..horizon {
            if k > 0 {
                prob *= mdp.transition_row(states[k - 1], actions[k - 1])[states[k]];
            }
            prob *= pi.probs(k + 1, states[k])[actions[k]];
            if prob == 0.0 {
                return;
            }
            ret += mdp.reward(states[k], actions[k]);
        }
        total += prob * ret;
    });
    total
}

/// Best return over every open-loop action sequence from `s` at `h = 1`
/// (optimal for deterministic MDPs).
pub fn best_open_loop_return(mdp: &TabularMdp, s: usize) -> f64 {
    let horizon = mdp.horizon();
    let na = mdp.num_actions();
    let mut best = f64::NEG_INFINITY;
    let mut seq = vec![0; horizon];
    loop {
        let mut dist = vec![0.0; mdp.num_states()];
        dist[s] = 1.0;
        let mut ret = 0.0;
        for &a in &seq {
            let mut next = vec![0.0; mdp.num_states()];
            for (x, &px) in dist.iter().enumerate() {
                ret += px * mdp.reward(x, a);
                for (y, &py) in mdp.transition_row(x, a).iter().enumerate() {
                    next[y] += px * py;
                }
            }
            dist = next;
        }
        best = best.max(ret);
        let mut i = horizon;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            seq[i] += 1;
            if seq[i] < na {
                break;
            }
            seq[i] = 0;
        }
    }
}
