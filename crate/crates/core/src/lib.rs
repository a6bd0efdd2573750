//! Exact tabular imitation-learning lab: finite-horizon MDPs, the adaptive
//! intervention-gated training loop (AdapMen) with BC and DAgger baselines,
//! and numerical verification of the sub-optimality bounds by dynamic
//! programming.

pub mod analysis;
pub mod envs;
pub mod gating;
pub mod mdp;
pub mod rng;
pub mod training;

pub use rng::SeededRng;
