//! Tabular benchmark environments.
//!
//! The cliff walk is the interesting one: a single wrong action drops the
//! agent into an absorbing zero-reward state, so one mistake at step `h`
//! forfeits the rest of the episode and μ-recoverability grows with `H`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{GreedyPolicy, MdpError, Policy, QTable, TabularMdp};
use crate::rng::SeededRng;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment parameter `{field}`: {message}")]
    Parameter { field: &'static str, message: String },
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

fn bad(field: &'static str, message: impl Into<String>) -> EnvError {
    EnvError::Parameter {
        field,
        message: message.into(),
    }
}

/// Environment description as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Cliffwalk {
        width: usize,
        horizon: usize,
        #[serde(default)]
        slip: f64,
    },
    Chain {
        length: usize,
        horizon: usize,
        #[serde(default)]
        slip: f64,
    },
    Gridworld {
        rows: usize,
        cols: usize,
        horizon: usize,
        #[serde(default)]
        slip: f64,
    },
    Random {
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        seed: u64,
        #[serde(default)]
        reward_sparsity: f64,
    },
}

impl EnvSpec {
    pub fn build(&self) -> Result<TabularMdp, EnvError> {
        match *self {
            EnvSpec::Cliffwalk { width, horizon, slip } => make_cliffwalk(width, horizon, slip),
            EnvSpec::Chain { length, horizon, slip } => make_chain(length, horizon, slip),
            EnvSpec::Gridworld { rows, cols, horizon, slip } => make_gridworld(rows, cols, horizon, slip),
            EnvSpec::Random {
                num_states,
                num_actions,
                horizon,
                seed,
                reward_sparsity,
            } => make_random_mdp(num_states, num_actions, horizon, seed, reward_sparsity),
        }
    }

    pub fn horizon(&self) -> usize {
        match *self {
            EnvSpec::Cliffwalk { horizon, .. }
            | EnvSpec::Chain { horizon, .. }
            | EnvSpec::Gridworld { horizon, .. }
            | EnvSpec::Random { horizon, .. } => horizon,
        }
    }

    pub fn with_horizon(&self, h: usize) -> EnvSpec {
        let mut spec = self.clone();
        match &mut spec {
            EnvSpec::Cliffwalk { horizon, .. }
            | EnvSpec::Chain { horizon, .. }
            | EnvSpec::Gridworld { horizon, .. }
            | EnvSpec::Random { horizon, .. } => *horizon = h,
        }
        spec
    }

    /// Geometry for drawing states on a grid.
    pub fn layout(&self) -> Layout {
        match *self {
            EnvSpec::Cliffwalk { width, .. } => Layout {
                rows: 2,
                cols: width,
                // The fallen state is drawn below the first ledge cell.
                positions: (0..width).map(|c| Some([0, c])).chain([Some([1, 0])]).collect(),
                action_names: vec!["forward".into(), "left".into(), "right".into()],
            },
            EnvSpec::Chain { length, .. } => Layout {
                rows: 1,
                cols: length,
                positions: (0..length).map(|c| Some([0, c])).collect(),
                action_names: vec!["right".into(), "left".into()],
            },
            EnvSpec::Gridworld { rows, cols, .. } => Layout {
                rows,
                cols,
                positions: (0..rows * cols).map(|s| Some([s / cols, s % cols])).collect(),
                action_names: GRID_MOVES.iter().map(|(n, _, _)| (*n).into()).collect(),
            },
            EnvSpec::Random {
                num_states,
                num_actions,
                ..
            } => Layout {
                rows: 1,
                cols: num_states,
                positions: (0..num_states).map(|c| Some([0, c])).collect(),
                action_names: (0..num_actions).map(|a| format!("a{a}")).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub rows: usize,
    pub cols: usize,
    /// `[row, col]` per state; `None` for states with no cell.
    pub positions: Vec<Option<[usize; 2]>>,
    pub action_names: Vec<String>,
}

/// Cliff walk: `width` ledge cells plus an absorbing fallen state (index
/// `width`). Action 0 moves forward (slipping off with probability `slip`);
/// actions 1 and 2 step off the ledge. Every action taken on the ledge earns
/// 1; the fallen state earns 0 forever. The last cell loops onto itself.
pub fn make_cliffwalk(width: usize, horizon: usize, slip: f64) -> Result<TabularMdp, EnvError> {
    if width < 3 {
        return Err(bad("width", format!("must be at least 3, got {width}")));
    }
    if !(0.0..0.5).contains(&slip) {
        return Err(bad("slip", format!("must lie in [0, 0.5), got {slip}")));
    }
    if horizon == 0 {
        return Err(bad("horizon", "must be positive"));
    }
    let ns = width + 1;
    let na = 3;
    let fallen = width;
    let mut transition = vec![0.0; ns * na * ns];
    let mut reward = vec![0.0; ns * na];
    let mut set = |s: usize, a: usize, next: usize, p: f64| transition[(s * na + a) * ns + next] += p;
    for c in 0..width {
        let ahead = (c + 1).min(width - 1);
        set(c, 0, ahead, 1.0 - slip);
        set(c, 0, fallen, slip);
        set(c, 1, fallen, 1.0);
        set(c, 2, fallen, 1.0);
        for a in 0..na {
            reward[c * na + a] = 1.0;
        }
    }
    for a in 0..na {
        set(fallen, a, fallen, 1.0);
    }
    let mut initial = vec![0.0; ns];
    initial[0] = 1.0;
    Ok(TabularMdp::new(ns, na, horizon, transition, reward, initial)?)
}

/// Chain of `length` states. Action 0 advances (stays put with probability
/// `slip`), action 1 moves back. Reward 1 for any action at the last state.
pub fn make_chain(length: usize, horizon: usize, slip: f64) -> Result<TabularMdp, EnvError> {
    if length < 2 {
        return Err(bad("length", format!("must be at least 2, got {length}")));
    }
    if !(0.0..1.0).contains(&slip) {
        return Err(bad("slip", format!("must lie in [0, 1), got {slip}")));
    }
    if horizon == 0 {
        return Err(bad("horizon", "must be positive"));
    }
    let (ns, na) = (length, 2);
    let mut transition = vec![0.0; ns * na * ns];
    let mut reward = vec![0.0; ns * na];
    for s in 0..ns {
        let fwd = (s + 1).min(ns - 1);
        let back = s.saturating_sub(1);
        transition[(s * na) * ns + fwd] += 1.0 - slip;
        transition[(s * na) * ns + s] += slip;
        transition[(s * na + 1) * ns + back] += 1.0;
    }
    reward[(ns - 1) * na] = 1.0;
    reward[(ns - 1) * na + 1] = 1.0;
    let mut initial = vec![0.0; ns];
    initial[0] = 1.0;
    Ok(TabularMdp::new(ns, na, horizon, transition, reward, initial)?)
}

const GRID_MOVES: [(&str, isize, isize); 4] = [("up", -1, 0), ("right", 0, 1), ("down", 1, 0), ("left", 0, -1)];

/// Open grid starting at the top-left corner. Moves hit walls by staying
/// put; with probability `slip` a uniformly random move happens instead.
/// Reward 1 for any action in the bottom-right goal cell.
pub fn make_gridworld(rows: usize, cols: usize, horizon: usize, slip: f64) -> Result<TabularMdp, EnvError> {
    if rows * cols < 2 {
        return Err(bad("rows", "grid needs at least two cells"));
    }
    if !(0.0..1.0).contains(&slip) {
        return Err(bad("slip", format!("must lie in [0, 1), got {slip}")));
    }
    if horizon == 0 {
        return Err(bad("horizon", "must be positive"));
    }
    let ns = rows * cols;
    let na = GRID_MOVES.len();
    let target = |s: usize, m: usize| -> usize {
        let (_, dr, dc) = GRID_MOVES[m];
        let (r, c) = ((s / cols) as isize + dr, (s % cols) as isize + dc);
        if r < 0 || c < 0 || r >= rows as isize || c >= cols as isize {
            s
        } else {
            r as usize * cols + c as usize
        }
    };
    let mut transition = vec![0.0; ns * na * ns];
    for s in 0..ns {
        for a in 0..na {
            let row = &mut transition[(s * na + a) * ns..(s * na + a + 1) * ns];
            row[target(s, a)] += 1.0 - slip;
            for m in 0..na {
                row[target(s, m)] += slip / na as f64;
            }
        }
    }
    let mut reward = vec![0.0; ns * na];
    for a in 0..na {
        reward[(ns - 1) * na + a] = 1.0;
    }
    let mut initial = vec![0.0; ns];
    initial[0] = 1.0;
    Ok(TabularMdp::new(ns, na, horizon, transition, reward, initial)?)
}

/// Random MDP drawn from `SeededRng::new(seed)` in this order:
///
/// 1. for each `(s, a)` (s-major), `S` weights `1 - next_f64()`, normalized;
/// 2. for each `(s, a)`, reward `0` if `next_f64() < sparsity`, else
///    `next_f64()`;
/// 3. `S` initial weights `1 - next_f64()`, normalized.
pub fn make_random_mdp(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    seed: u64,
    reward_sparsity: f64,
) -> Result<TabularMdp, EnvError> {
    if num_states < 2 {
        return Err(bad("num_states", "must be at least 2"));
    }
    if num_actions < 2 {
        return Err(bad("num_actions", "must be at least 2"));
    }
    if horizon == 0 {
        return Err(bad("horizon", "must be positive"));
    }
    if !(0.0..=1.0).contains(&reward_sparsity) {
        return Err(bad("reward_sparsity", format!("must lie in [0, 1], got {reward_sparsity}")));
    }
    let mut rng = SeededRng::new(seed);
    let normalized = |rng: &mut SeededRng| -> Vec<f64> {
        let w: Vec<f64> = (0..num_states).map(|_| 1.0 - rng.next_f64()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    };
    let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        transition.extend(normalized(&mut rng));
    }
    let reward = (0..num_states * num_actions)
        .map(|_| {
            if rng.next_f64() < reward_sparsity {
                0.0
            } else {
                rng.next_f64()
            }
        })
        .collect();
    let initial = normalized(&mut rng);
    Ok(TabularMdp::new(num_states, num_actions, horizon, transition, reward, initial)?)
}

/// `max_{h,s,a} Q*_h(s, π*) - Q*_h(s, a)`.
pub fn mu_recoverability(q_star: &QTable, pi_star: &GreedyPolicy) -> f64 {
    let mut mu: f64 = 0.0;
    for h in 1..=q_star.horizon() {
        for s in 0..q_star.num_states() {
            let best = q_star.expected(h, s, pi_star.probs(h, s));
            for &q in q_star.row(h, s) {
                mu = mu.max(best - q);
            }
        }
    }
    mu
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{policy_value, value_iteration_finite};

    #[test]
    fn cliffwalk_expert_walks_the_ledge() {
        let m = make_cliffwalk(5, 10, 0.0).unwrap();
        let (q, pi) = value_iteration_finite(&m);
        assert_eq!(policy_value(&m, &pi), 10.0);
        assert_eq!(mu_recoverability(&q, &pi), 9.0);
        for h in 1..=10 {
            for c in 0..5 {
                assert_eq!(pi.action(h, c), 0);
            }
        }
    }

    #[test]
    fn cliffwalk_rejects_bad_parameters() {
        assert!(make_cliffwalk(2, 10, 0.0).is_err());
        assert!(make_cliffwalk(5, 10, 0.5).is_err());
        assert!(make_cliffwalk(5, 10, 0.4).unwrap().validate().is_valid());
    }

    #[test]
    fn random_mdp_is_deterministic_in_seed() {
        let a = make_random_mdp(4, 3, 6, 7, 0.3).unwrap();
        assert_eq!(a, make_random_mdp(4, 3, 6, 7, 0.3).unwrap());
        assert_ne!(a, make_random_mdp(4, 3, 6, 8, 0.3).unwrap());
    }

    #[test]
    fn fully_sparse_random_mdp_has_zero_value() {
        let m = make_random_mdp(4, 3, 6, 1, 1.0).unwrap();
        let (q, pi) = value_iteration_finite(&m);
        assert_eq!(policy_value(&m, &pi), 0.0);
        assert_eq!(mu_recoverability(&q, &pi), 0.0);
    }

    #[test]
    fn chain_and_grid_are_valid() {
        let m = make_chain(5, 8, 0.1).unwrap();
        let (_, pi) = value_iteration_finite(&m);
        assert!(policy_value(&m, &pi) > 0.0);
        let g = make_gridworld(3, 4, 10, 0.2).unwrap();
        assert!(g.validate().is_valid());
        let (_, pi) = value_iteration_finite(&g);
        assert!(policy_value(&g, &pi) > 0.0);
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let spec: EnvSpec = toml::from_str("kind = \"cliffwalk\"\nwidth = 8\nhorizon = 16\n").unwrap();
        assert_eq!(
            spec,
            EnvSpec::Cliffwalk {
                width: 8,
                horizon: 16,
                slip: 0.0
            }
        );
        assert!(toml::from_str::<EnvSpec>("kind = \"cliffwalk\"\nwidth = 8\nhorizon = 16\nwdith = 3\n").is_err());
        assert_eq!(spec.layout().positions.len(), spec.build().unwrap().num_states());
    }
}
