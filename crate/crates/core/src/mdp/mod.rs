//! Tabular MDPs and posterior ensembles of transition models.
//!
//! Transition tables are stored flat in `(state, action, next_state)` row-major
//! order; `row(s, a)` is the contiguous slice `p(·|s,a)`.

mod builtin;
mod io;

pub use builtin::{
    builtin_chain, builtin_counterexample, ChainParams, CHAIN_DISCOUNT, CHAIN_GOAL_REWARD, CHAIN_GOAL_SAFE_REWARD,
    CHAIN_SAFE_REWARD, COUNTEREXAMPLE_BETA, COUNTEREXAMPLE_HORIZON, RISKY, SAFE,
};
pub use io::{load_ensemble, load_mdp, parse_ensemble, parse_mdp, save_ensemble, save_mdp};

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

/// Tolerance on each transition row sum.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Row drift above which [`ModelEnsemble::mean_model`] renormalizes.
pub const MEAN_ROW_DRIFT_TOL: f64 = 1e-12;

/// Stochastic transition table `p(s'|s,a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transitions {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Transitions {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        let t = Self { n_states, n_actions, probs };
        t.validate()?;
        Ok(t)
    }

    /// Builds a table from a closure over `(s, a, s')`.
    pub fn from_fn(n_states: usize, n_actions: usize, f: impl Fn(usize, usize, usize) -> f64) -> Result<Self> {
        let mut probs = Vec::with_capacity(n_states * n_actions * n_states);
        for s in 0..n_states {
            for a in 0..n_actions {
                for s2 in 0..n_states {
                    probs.push(f(s, a, s2));
                }
            }
        }
        Self::new(n_states, n_actions, probs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(validation("transition table needs at least one state and one action"));
        }
        let expected = self.n_states * self.n_actions * self.n_states;
        if self.probs.len() != expected {
            return Err(validation(format!(
                "transition table has {} entries, expected {expected}",
                self.probs.len()
            )));
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.row(s, a);
                if let Some(p) = row.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
                    return Err(validation(format!("p(.|{s},{a}) has invalid entry {p}")));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(validation(format!("p(.|{s},{a}) sums to {sum}, expected 1")));
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.probs[start..start + self.n_states]
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.row(s, a)[next]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }
}

/// A tabular MDP `(S, A, r, p, s₀, γ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    /// `r(s,a)` at index `s * n_actions + a`.
    reward: Vec<f64>,
    transitions: Transitions,
    discount: f64,
    initial_state: usize,
}

impl Mdp {
    pub fn new(reward: Vec<f64>, transitions: Transitions, discount: f64, initial_state: usize) -> Result<Self> {
        let mdp = Self {
            n_states: transitions.n_states,
            n_actions: transitions.n_actions,
            reward,
            transitions,
            discount,
            initial_state,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn validate(&self) -> Result<()> {
        self.transitions.validate()?;
        validate_common(self.n_states, self.n_actions, &self.reward, self.discount, self.initial_state)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn transitions(&self) -> &Transitions {
        &self.transitions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    /// `Δr = max r - min r`.
    pub fn reward_span(&self) -> f64 {
        reward_span(&self.reward)
    }

    pub fn with_discount(mut self, discount: f64) -> Result<Self> {
        self.discount = discount;
        self.validate()?;
        Ok(self)
    }
}

fn validate_common(n_states: usize, n_actions: usize, reward: &[f64], discount: f64, initial_state: usize) -> Result<()> {
    if reward.len() != n_states * n_actions {
        return Err(validation(format!(
            "reward table has {} entries, expected {}",
            reward.len(),
            n_states * n_actions
        )));
    }
    if let Some(r) = reward.iter().find(|r| !r.is_finite()) {
        return Err(validation(format!("reward {r} is not finite")));
    }
    if !(discount > 0.0 && discount <= 1.0) {
        return Err(validation(format!("discount must be in (0, 1], got {discount}")));
    }
    if initial_state >= n_states {
        return Err(validation(format!("initial state {initial_state} out of range 0..{n_states}")));
    }
    Ok(())
}

pub(crate) fn reward_span(reward: &[f64]) -> f64 {
    let (lo, hi) = reward
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    hi - lo
}

fn validate_weights(weights: &[f64], what: &str) -> Result<()> {
    if weights.is_empty() {
        return Err(validation(format!("{what} is empty")));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(validation(format!("{what} has invalid entry {w}")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(validation(format!("{what} sums to {sum}, expected 1")));
    }
    Ok(())
}

/// Posterior over a finite set of transition models sharing rewards.
///
/// Under the dynamic uncertainty model a fresh model is drawn from the weights
/// at every time step, independently across time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEnsemble {
    n_states: usize,
    n_actions: usize,
    reward: Vec<f64>,
    discount: f64,
    initial_state: usize,
    models: Vec<Transitions>,
    weights: Vec<f64>,
    /// Optional per-time-step weights `f_t`, finite horizon only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step_weights: Option<Vec<Vec<f64>>>,
}

impl ModelEnsemble {
    pub fn new(
        reward: Vec<f64>,
        models: Vec<Transitions>,
        weights: Vec<f64>,
        discount: f64,
        initial_state: usize,
    ) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| validation("ensemble has no models"))?;
        let e = Self {
            n_states: first.n_states,
            n_actions: first.n_actions,
            reward,
            discount,
            initial_state,
            models,
            weights,
            step_weights: None,
        };
        e.validate()?;
        Ok(e)
    }

    /// Ensemble with a single model of weight one.
    pub fn point_mass(mdp: &Mdp) -> Self {
        Self {
            n_states: mdp.n_states,
            n_actions: mdp.n_actions,
            reward: mdp.reward.clone(),
            discount: mdp.discount,
            initial_state: mdp.initial_state,
            models: vec![mdp.transitions.clone()],
            weights: vec![1.0],
            step_weights: None,
        }
    }

    /// Attaches per-time-step weights; entry `t` is the law of the model at step `t`.
    pub fn with_step_weights(mut self, step_weights: Vec<Vec<f64>>) -> Result<Self> {
        self.step_weights = Some(step_weights);
        self.validate()?;
        Ok(self)
    }

    pub fn with_discount(mut self, discount: f64) -> Result<Self> {
        self.discount = discount;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(validation("ensemble has no models"));
        }
        for (i, m) in self.models.iter().enumerate() {
            if m.n_states != self.n_states || m.n_actions != self.n_actions {
                return Err(validation(format!(
                    "model {i} has shape {}x{}, expected {}x{}",
                    m.n_states, m.n_actions, self.n_states, self.n_actions
                )));
            }
            m.validate()
                .map_err(|e| validation(format!("model {i}: {e}")))?;
        }
        if self.weights.len() != self.models.len() {
            return Err(validation(format!(
                "{} weights for {} models",
                self.weights.len(),
                self.models.len()
            )));
        }
        validate_weights(&self.weights, "model weights")?;
        if let Some(steps) = &self.step_weights {
            for (t, w) in steps.iter().enumerate() {
                if w.len() != self.models.len() {
                    return Err(validation(format!("step {t} weights have {} entries for {} models", w.len(), self.models.len())));
                }
                validate_weights(w, &format!("step {t} weights"))?;
            }
        }
        validate_common(self.n_states, self.n_actions, &self.reward, self.discount, self.initial_state)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn models(&self) -> &[Transitions] {
        &self.models
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn step_weights(&self) -> Option<&[Vec<f64>]> {
        self.step_weights.as_deref()
    }

    pub fn is_stationary(&self) -> bool {
        self.step_weights.is_none()
    }

    /// Weights in force at time step `t`.
    pub fn weights_at(&self, t: usize) -> &[f64] {
        match &self.step_weights {
            Some(steps) if !steps.is_empty() => &steps[t.min(steps.len() - 1)],
            _ => &self.weights,
        }
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn reward_span(&self) -> f64 {
        reward_span(&self.reward)
    }

    /// Mean posterior transition table `p̄(s'|s,a) = E[P(s'|s,a)]`.
    pub fn mean_model(&self) -> Transitions {
        mean_of(&self.models, &self.weights)
    }

    /// Mean transition table under the step-`t` weights.
    pub fn mean_model_at(&self, t: usize) -> Transitions {
        mean_of(&self.models, self.weights_at(t))
    }

    /// The MDP with the mean posterior transition table.
    pub fn mean_mdp(&self) -> Mdp {
        Mdp {
            n_states: self.n_states,
            n_actions: self.n_actions,
            reward: self.reward.clone(),
            transitions: self.mean_model(),
            discount: self.discount,
            initial_state: self.initial_state,
        }
    }

    /// Member `i` as a standalone MDP.
    pub fn model_mdp(&self, i: usize) -> Mdp {
        Mdp {
            n_states: self.n_states,
            n_actions: self.n_actions,
            reward: self.reward.clone(),
            transitions: self.models[i].clone(),
            discount: self.discount,
            initial_state: self.initial_state,
        }
    }
}

fn mean_of(models: &[Transitions], weights: &[f64]) -> Transitions {
    let first = &models[0];
    let (n_states, n_actions) = (first.n_states, first.n_actions);
    // accumulate deviations from the first model; identical members reproduce it bit for bit
    let mut probs = first.probs.clone();
    let total: f64 = weights.iter().sum();
    for (m, &w) in models.iter().zip(weights).skip(1) {
        if w == 0.0 {
            continue;
        }
        for ((acc, p), p0) in probs.iter_mut().zip(&m.probs).zip(&first.probs) {
            *acc += w / total * (p - p0);
        }
    }
    for row in probs.chunks_mut(n_states) {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > MEAN_ROW_DRIFT_TOL {
            row.iter_mut().for_each(|p| *p /= sum);
        }
    }
    Transitions { n_states, n_actions, probs }
}

/// Time-indexed deterministic Markov policy with an optional stationary tail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyPlan {
    /// `rules[t][s]` is the action taken in state `s` at step `t`.
    pub rules: Vec<Vec<usize>>,
    /// Rule used for every `t ≥ rules.len()`.
    pub tail_rule: Option<Vec<usize>>,
}

impl PolicyPlan {
    pub fn stationary(rule: Vec<usize>) -> Self {
        Self { rules: Vec::new(), tail_rule: Some(rule) }
    }

    /// Decision rule in force at step `t`, if the plan covers it.
    pub fn rule_at(&self, t: usize) -> Option<&[usize]> {
        self.rules
            .get(t)
            .or(self.tail_rule.as_ref())
            .map(Vec::as_slice)
    }

    pub fn action(&self, t: usize, s: usize) -> Option<usize> {
        self.rule_at(t).and_then(|r| r.get(s).copied())
    }

    /// Whether the plan defines a rule for every step below `horizon`.
    pub fn covers(&self, horizon: usize) -> bool {
        self.tail_rule.is_some() || self.rules.len() >= horizon
    }

    pub fn validate(&self, n_states: usize, n_actions: usize) -> Result<()> {
        let tail = self.tail_rule.iter();
        for (t, rule) in self.rules.iter().chain(tail).enumerate() {
            if rule.len() != n_states {
                return Err(validation(format!("rule {t} covers {} states, expected {n_states}", rule.len())));
            }
            if let Some((s, a)) = rule.iter().enumerate().find(|(_, a)| **a >= n_actions) {
                return Err(validation(format!("rule {t} maps state {s} to invalid action {a}")));
            }
        }
        Ok(())
    }
}
