//! Built-in domains: the non-quasi-concavity counterexample and a chain with
//! a safe action and a risky traverse.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Result};

use super::{Mdp, ModelEnsemble, Transitions};

/// Horizon of the counterexample.
pub const COUNTEREXAMPLE_HORIZON: usize = 2;
/// Confidence level at which the counterexample's `h` is not quasi-concave.
pub const COUNTEREXAMPLE_BETA: f64 = 0.5;

/// Four-state, two-action MDP on which `h(α)` is neither concave nor convex.
///
/// From `s0`, action 0 moves to `s2` surely and action 1 moves to `s1` with
/// probability 0.02 and to `s3` otherwise. The rewards `[-2, 0, 1]` are
/// collected in `s1, s2, s3` respectively, under either action, at step 1. The
/// three leaf states are absorbing; with `T = 2` only their first reward counts.
/// `γ = 1`, so only finite-horizon solves apply.
pub fn builtin_counterexample() -> Mdp {
    const LEAVES: [f64; 3] = [-2.0, 0.0, 1.0];
    let n_states = 4;
    let n_actions = 2;
    let mut probs = vec![0.0; n_states * n_actions * n_states];
    let mut set = |s: usize, a: usize, s2: usize, p: f64| probs[(s * n_actions + a) * n_states + s2] = p;
    set(0, 0, 2, 1.0);
    set(0, 1, 1, 0.02);
    set(0, 1, 3, 0.98);
    for leaf in 1..n_states {
        for a in 0..n_actions {
            set(leaf, a, leaf, 1.0);
        }
    }
    let mut reward = vec![0.0; n_states * n_actions];
    for (i, r) in LEAVES.iter().enumerate() {
        for a in 0..n_actions {
            reward[(i + 1) * n_actions + a] = *r;
        }
    }
    let transitions = Transitions::new(n_states, n_actions, probs).expect("counterexample rows are stochastic");
    Mdp::new(reward, transitions, 1.0, 0).expect("counterexample is valid")
}

/// Chain domain parameters; see [`builtin_chain`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainParams {
    pub n: usize,
    pub slip: f64,
    pub n_models: usize,
    pub perturb: f64,
    pub seed: u64,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self { n: 5, slip: 0.06, n_models: 8, perturb: 0.05, seed: 7 }
    }
}

impl ChainParams {
    pub fn build(&self) -> Result<ModelEnsemble> {
        builtin_chain(self.n, self.slip, self.n_models, self.perturb, self.seed)
    }
}

/// Discount of the chain domain.
pub const CHAIN_DISCOUNT: f64 = 0.9;
/// Per-step reward of the safe action away from the goal.
pub const CHAIN_SAFE_REWARD: f64 = 0.2;
/// Per-step reward of the safe action at the goal.
pub const CHAIN_GOAL_SAFE_REWARD: f64 = 0.7;
/// Per-step reward of the risky action at the goal.
pub const CHAIN_GOAL_REWARD: f64 = 1.0;

pub const SAFE: usize = 0;
pub const RISKY: usize = 1;

fn nominal_chain(n: usize, slip: f64) -> (Vec<f64>, Vec<f64>) {
    let n_actions = 2;
    let mut probs = vec![0.0; n * n_actions * n];
    let mut reward = vec![0.0; n * n_actions];
    for s in 0..n {
        // safe: stay put and collect the small reward
        probs[(s * n_actions + SAFE) * n + s] = 1.0;
        reward[s * n_actions + SAFE] = if s == n - 1 { CHAIN_GOAL_SAFE_REWARD } else { CHAIN_SAFE_REWARD };
        // risky: advance (or hold at the goal) unless the current slips back to the start
        let ahead = (s + 1).min(n - 1);
        let row = (s * n_actions + RISKY) * n;
        probs[row + ahead] += 1.0 - slip;
        probs[row] += slip;
        if s == n - 1 {
            reward[s * n_actions + RISKY] = CHAIN_GOAL_REWARD;
        }
    }
    (probs, reward)
}

/// Chain with a safe low-reward action and a risky high-reward traverse, plus
/// `n_models` perturbed copies forming the posterior ensemble.
///
/// The safe action stays put. The risky action advances one state, or slips
/// back to state 0 with probability `slip`; at the goal (state `n-1`) it pays
/// [`CHAIN_GOAL_REWARD`] and still risks the slip, while the safe action there
/// settles for [`CHAIN_GOAL_SAFE_REWARD`].
///
/// Every row of each model is `(1 - perturb)·nominal + perturb·d`, where `d` is
/// a flat Dirichlet draw over the nominal row's support, so perturbed models
/// never add transitions the nominal chain lacks. Models are equally weighted.
/// The output is a pure function of the arguments.
pub fn builtin_chain(n: usize, slip: f64, n_models: usize, perturb: f64, seed: u64) -> Result<ModelEnsemble> {
    if n < 2 {
        return Err(domain(format!("chain needs at least 2 states, got {n}")));
    }
    if !(0.0..1.0).contains(&slip) {
        return Err(domain(format!("slip must be in [0, 1), got {slip}")));
    }
    if n_models == 0 {
        return Err(domain("chain ensemble needs at least one model"));
    }
    if !(0.0..=1.0).contains(&perturb) {
        return Err(domain(format!("perturb must be in [0, 1], got {perturb}")));
    }

    let (nominal, reward) = nominal_chain(n, slip);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut models = Vec::with_capacity(n_models);
    for _ in 0..n_models {
        let mut probs = nominal.clone();
        if perturb > 0.0 {
            for row in probs.chunks_mut(n) {
                let support: Vec<usize> = (0..n).filter(|&i| row[i] > 0.0).collect();
                if support.len() < 2 {
                    continue;
                }
                // flat Dirichlet via normalized unit exponentials
                let draws: Vec<f64> = support
                    .iter()
                    .map(|_| -(1.0 - rng.random::<f64>()).ln())
                    .collect();
                let total: f64 = draws.iter().sum();
                for (&i, d) in support.iter().zip(&draws) {
                    row[i] = (1.0 - perturb) * row[i] + perturb * d / total;
                }
            }
        }
        models.push(Transitions::new(n, 2, probs)?);
    }
    let weights = vec![1.0 / n_models as f64; n_models];
    ModelEnsemble::new(reward, models, weights, CHAIN_DISCOUNT, 0)
}
