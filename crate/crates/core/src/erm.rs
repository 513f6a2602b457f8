//! ERM dynamic programming with time-decaying risk levels.
//!
//! The value at step `t` is taken at risk level `α·γᵗ`:
//!
//! ```text
//! v_t(s) = max_a ERM^{α·γᵗ}[ r(s,a) + γ·v_{t+1}(S') ],   S' ~ p̄(·|s,a)
//! ```
//!
//! where `p̄` is the posterior-mean transition table. With this schedule the
//! recursion is exact for `ERM^α` of the discounted return, and a deterministic
//! Markov policy greedy to `v` is optimal.
//!
//! Infinite-horizon problems are approximated by `T'` risk-averse backups on
//! top of the risk-neutral optimum `v^∞`, followed by the risk-neutral policy
//! `π^∞`. The loss of that plan is at most `c·γ^{2T'}` with
//! `c = α·Δr² / (8·(1-γ)²)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, validation, RasrError, Result};
use crate::mdp::{Mdp, ModelEnsemble, PolicyPlan, Transitions};
use crate::risk::{erm_weighted, RiskLevel};

/// Default ceiling on the number of risk-averse backups.
pub const DEFAULT_HORIZON_CAP: u64 = 1_000_000;

/// Iteration ceiling for the stationary fixed-point solvers.
pub const MAX_VI_ITERATIONS: u64 = 10_000_000;

/// States per step above which backups fan out over the rayon pool.
const PARALLEL_STATES: usize = 256;

/// Origin of the terminal value vector of a [`ValueSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalKind {
    Zero,
    RiskNeutral,
    UserSupplied,
    /// Stationary fixed point of the worst-case backup.
    RobustFixedPoint,
}

/// Value functions `v_0 … v_T'` and the risk level used at each backup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSeries {
    /// `values[t][s]`; one more entry than there are backups.
    pub values: Vec<Vec<f64>>,
    /// `risk_levels[t]` is the level of the backup producing `values[t]`.
    pub risk_levels: Vec<RiskLevel>,
    pub terminal: TerminalKind,
}

impl ValueSeries {
    pub fn initial(&self) -> &[f64] {
        &self.values[0]
    }

    pub fn steps(&self) -> usize {
        self.risk_levels.len()
    }
}

/// Outcome of an ERM solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErmSolveReport {
    pub alpha: RiskLevel,
    pub plan: PolicyPlan,
    pub values: ValueSeries,
    /// `v_0(s₀)`.
    pub objective: f64,
    /// Guaranteed bound on the performance loss; `None` when no guarantee applies.
    pub loss_bound: Option<f64>,
    /// Number of risk-averse backups `T'`.
    pub horizon_used: usize,
    /// Sup-norm Bellman residual of the inner stationary solve, if one ran.
    pub stationary_residual: Option<f64>,
}

/// Options for [`solve_infinite_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfiniteOptions {
    /// Target for the loss bound `c·γ^{2T'}`.
    pub tolerance: f64,
    /// Forces `T'` instead of deriving it from the tolerance.
    pub horizon: Option<usize>,
    pub horizon_cap: u64,
}

impl InfiniteOptions {
    pub fn new(tolerance: f64) -> Self {
        Self { tolerance, horizon: None, horizon_cap: DEFAULT_HORIZON_CAP }
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = Some(horizon);
        self
    }
}

/// Risk-neutral stationary optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct StationarySolution {
    pub values: Vec<f64>,
    pub rule: Vec<usize>,
    pub residual: f64,
    pub iterations: u64,
}

#[inline]
fn state_action_value(
    outcomes: &mut Vec<f64>,
    reward: f64,
    row: &[f64],
    gamma: f64,
    v_next: &[f64],
    alpha: RiskLevel,
) -> f64 {
    outcomes.clear();
    outcomes.extend(v_next.iter().map(|v| reward + gamma * v));
    erm_weighted(outcomes, row, alpha)
}

fn backup_state(
    s: usize,
    rewards: &[f64],
    transitions: &Transitions,
    gamma: f64,
    v_next: &[f64],
    alpha: RiskLevel,
    outcomes: &mut Vec<f64>,
) -> (f64, usize) {
    let n_actions = transitions.n_actions();
    let mut best = f64::NEG_INFINITY;
    let mut best_a = 0;
    for a in 0..n_actions {
        let q = state_action_value(outcomes, rewards[s * n_actions + a], transitions.row(s, a), gamma, v_next, alpha);
        // strict comparison keeps the lowest index on ties
        if q > best {
            best = q;
            best_a = a;
        }
    }
    (best, best_a)
}

fn backup_with(
    rewards: &[f64],
    transitions: &Transitions,
    gamma: f64,
    v_next: &[f64],
    alpha: RiskLevel,
) -> (Vec<f64>, Vec<usize>) {
    let n = transitions.n_states();
    let pairs: Vec<(f64, usize)> = if n >= PARALLEL_STATES {
        (0..n)
            .into_par_iter()
            .map_init(Vec::new, |buf, s| backup_state(s, rewards, transitions, gamma, v_next, alpha, buf))
            .collect()
    } else {
        let mut buf = Vec::with_capacity(n);
        (0..n)
            .map(|s| backup_state(s, rewards, transitions, gamma, v_next, alpha, &mut buf))
            .collect()
    };
    pairs.into_iter().unzip()
}

fn policy_backup_with(
    rewards: &[f64],
    transitions: &Transitions,
    gamma: f64,
    v_next: &[f64],
    alpha: RiskLevel,
    rule: &[usize],
) -> Vec<f64> {
    let n_actions = transitions.n_actions();
    let n = transitions.n_states();
    let eval = |s: usize, buf: &mut Vec<f64>| {
        let a = rule[s];
        state_action_value(buf, rewards[s * n_actions + a], transitions.row(s, a), gamma, v_next, alpha)
    };
    if n >= PARALLEL_STATES {
        (0..n).into_par_iter().map_init(Vec::new, |buf, s| eval(s, buf)).collect()
    } else {
        let mut buf = Vec::with_capacity(n);
        (0..n).map(|s| eval(s, &mut buf)).collect()
    }
}

/// One optimal ERM Bellman backup on `mdp` at level `alpha`.
///
/// `mdp` is expected to carry the posterior-mean transitions. Returns the new
/// values and the greedy rule, breaking ties toward the lowest action index.
pub fn erm_backup(v_next: &[f64], mdp: &Mdp, alpha: RiskLevel) -> Result<(Vec<f64>, Vec<usize>)> {
    if v_next.len() != mdp.n_states() {
        return Err(validation(format!("value vector has {} entries for {} states", v_next.len(), mdp.n_states())));
    }
    if v_next.iter().any(|v| !v.is_finite()) {
        return Err(validation("value vector must be finite"));
    }
    Ok(backup_with(mdp.rewards(), mdp.transitions(), mdp.discount(), v_next, alpha))
}

/// Levels `α, αγ, αγ², …` built by repeated multiplication so that
/// consecutive entries differ by exactly a factor `γ`.
pub fn decaying_levels(alpha: RiskLevel, gamma: f64, steps: usize) -> Vec<RiskLevel> {
    let mut levels = Vec::with_capacity(steps);
    let mut level = alpha;
    for _ in 0..steps {
        levels.push(level);
        level = level.scaled(gamma);
    }
    levels
}

/// Mean transition tables per step; a single table when the ensemble is stationary.
struct MeanModels {
    tables: Vec<Transitions>,
}

impl MeanModels {
    fn new(ensemble: &ModelEnsemble, steps: usize) -> Result<Self> {
        match ensemble.step_weights() {
            None => Ok(Self { tables: vec![ensemble.mean_model()] }),
            Some(w) if w.len() < steps => Err(validation(format!(
                "ensemble has per-step weights for {} steps but the horizon is {steps}",
                w.len()
            ))),
            Some(_) => Ok(Self { tables: (0..steps).map(|t| ensemble.mean_model_at(t)).collect() }),
        }
    }

    fn at(&self, t: usize) -> &Transitions {
        &self.tables[t.min(self.tables.len() - 1)]
    }
}

fn check_terminal(ensemble: &ModelEnsemble, terminal: &[f64]) -> Result<()> {
    if terminal.len() != ensemble.n_states() {
        return Err(validation(format!(
            "terminal value has {} entries for {} states",
            terminal.len(),
            ensemble.n_states()
        )));
    }
    if terminal.iter().any(|v| !v.is_finite()) {
        return Err(validation("terminal value must be finite"));
    }
    Ok(())
}

/// Backward induction with an arbitrary level schedule.
pub(crate) fn backward_induction(
    ensemble: &ModelEnsemble,
    levels: Vec<RiskLevel>,
    terminal: Vec<f64>,
    terminal_kind: TerminalKind,
) -> Result<(ValueSeries, Vec<Vec<usize>>)> {
    let steps = levels.len();
    let means = MeanModels::new(ensemble, steps)?;
    let gamma = ensemble.discount();
    let mut values = vec![Vec::new(); steps + 1];
    let mut rules = vec![Vec::new(); steps];
    values[steps] = terminal;
    for t in (0..steps).rev() {
        let (v, rule) = backup_with(ensemble.rewards(), means.at(t), gamma, &values[t + 1], levels[t]);
        values[t] = v;
        rules[t] = rule;
    }
    Ok((ValueSeries { values, risk_levels: levels, terminal: terminal_kind }, rules))
}

/// Finite-horizon solve of `max_π ERM^α[Σ_{t<T} γᵗ r_t + γᵀ v_T(S_T)]`.
///
/// `terminal` defaults to zeros. The result is exact, so `loss_bound = 0`.
pub fn solve_finite(
    ensemble: &ModelEnsemble,
    alpha: RiskLevel,
    horizon: usize,
    terminal: Option<&[f64]>,
) -> Result<ErmSolveReport> {
    ensemble.validate()?;
    if horizon == 0 {
        return Err(domain("finite-horizon solve needs horizon >= 1"));
    }
    let (terminal, kind) = match terminal {
        Some(v) => {
            check_terminal(ensemble, v)?;
            (v.to_vec(), TerminalKind::UserSupplied)
        }
        None => (vec![0.0; ensemble.n_states()], TerminalKind::Zero),
    };
    let levels = decaying_levels(alpha, ensemble.discount(), horizon);
    let (values, rules) = backward_induction(ensemble, levels, terminal, kind)?;
    let objective = values.values[0][ensemble.initial_state()];
    Ok(ErmSolveReport {
        alpha,
        plan: PolicyPlan { rules, tail_rule: None },
        values,
        objective,
        loss_bound: Some(0.0),
        horizon_used: horizon,
        stationary_residual: None,
    })
}

/// The constant `c = α·Δr² / (8·(1-γ)²)` of the infinite-horizon loss bound.
pub fn loss_constant(alpha: RiskLevel, reward_span: f64, gamma: f64) -> f64 {
    alpha.value() * reward_span * reward_span / (8.0 * (1.0 - gamma) * (1.0 - gamma))
}

/// `c·γ^{2T'}`.
pub fn loss_bound(alpha: RiskLevel, reward_span: f64, gamma: f64, horizon: usize) -> f64 {
    let c = loss_constant(alpha, reward_span, gamma);
    if c == 0.0 {
        return 0.0;
    }
    c * gamma.powf(2.0 * horizon as f64)
}

/// Smallest `T'` with `c·γ^{2T'} ≤ tolerance`.
pub fn required_horizon(alpha: RiskLevel, reward_span: f64, gamma: f64, tolerance: f64) -> u64 {
    let c = loss_constant(alpha, reward_span, gamma);
    if c <= tolerance {
        return 0;
    }
    let estimate = ((tolerance / c).ln() / (2.0 * gamma.ln())).ceil().max(0.0);
    if !estimate.is_finite() || estimate > u64::MAX as f64 / 2.0 {
        return u64::MAX;
    }
    let mut t = estimate as u64;
    let bound = |t: u64| c * gamma.powf(2.0 * t as f64);
    while bound(t) > tolerance {
        t += 1;
    }
    while t > 0 && bound(t - 1) <= tolerance {
        t -= 1;
    }
    t
}

/// Residual handed to the inner risk-neutral solve for a given tolerance.
pub fn stationary_residual_target(tolerance: f64, gamma: f64) -> f64 {
    tolerance / 10.0 * (1.0 - gamma)
}

fn check_infinite(ensemble: &ModelEnsemble) -> Result<()> {
    ensemble.validate()?;
    if ensemble.discount() >= 1.0 {
        return Err(RasrError::Unsupported(
            "infinite-horizon solve requires discount < 1; use a finite-horizon solve for discount = 1".into(),
        ));
    }
    if !ensemble.is_stationary() {
        return Err(RasrError::Unsupported(
            "infinite-horizon solve requires a stationary ensemble (no per-step weights)".into(),
        ));
    }
    Ok(())
}

/// Infinite-horizon ERM plan with a risk-neutral tail.
pub fn solve_infinite(ensemble: &ModelEnsemble, alpha: RiskLevel, tolerance: f64) -> Result<ErmSolveReport> {
    solve_infinite_with(ensemble, alpha, &InfiniteOptions::new(tolerance))
}

pub fn solve_infinite_with(ensemble: &ModelEnsemble, alpha: RiskLevel, opts: &InfiniteOptions) -> Result<ErmSolveReport> {
    infinite_pipeline(ensemble, alpha, opts, Schedule::Decaying)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Schedule {
    Decaying,
    Constant,
}

pub(crate) fn infinite_pipeline(
    ensemble: &ModelEnsemble,
    alpha: RiskLevel,
    opts: &InfiniteOptions,
    schedule: Schedule,
) -> Result<ErmSolveReport> {
    check_infinite(ensemble)?;
    if alpha.is_infinite() {
        return Err(domain("infinite-horizon ERM solve needs a finite alpha; use solve_robust_infinite for alpha = inf"));
    }
    if !(opts.tolerance > 0.0) {
        return Err(domain(format!("tolerance must be positive, got {}", opts.tolerance)));
    }
    let gamma = ensemble.discount();
    let span = ensemble.reward_span();
    let horizon = match opts.horizon {
        Some(h) => h as u64,
        None => required_horizon(alpha, span, gamma, opts.tolerance),
    };
    if horizon > opts.horizon_cap {
        return Err(RasrError::HorizonCap { needed: horizon, cap: opts.horizon_cap });
    }
    let horizon = horizon as usize;

    let mean = ensemble.mean_mdp();
    let stationary = risk_neutral_vi(&mean, stationary_residual_target(opts.tolerance, gamma))?;
    let levels = match schedule {
        Schedule::Decaying => decaying_levels(alpha, gamma, horizon),
        Schedule::Constant => vec![alpha; horizon],
    };
    let (values, rules) = backward_induction(ensemble, levels, stationary.values.clone(), TerminalKind::RiskNeutral)?;
    let objective = values.values[0][ensemble.initial_state()];
    let bound = match schedule {
        Schedule::Decaying => Some(loss_bound(alpha, span, gamma, horizon)),
        Schedule::Constant => None,
    };
    Ok(ErmSolveReport {
        alpha,
        plan: PolicyPlan { rules, tail_rule: Some(stationary.rule) },
        values,
        objective,
        loss_bound: bound,
        horizon_used: horizon,
        stationary_residual: Some(stationary.residual),
    })
}

fn stationary_fixed_point(
    mdp: &Mdp,
    residual: f64,
    alpha: RiskLevel,
) -> Result<StationarySolution> {
    if mdp.discount() >= 1.0 {
        return Err(domain("stationary value iteration requires discount < 1"));
    }
    if !(residual > 0.0) {
        return Err(domain(format!("residual must be positive, got {residual}")));
    }
    let mut v = vec![0.0; mdp.n_states()];
    let mut iterations = 0;
    loop {
        let (next, rule) = backup_with(mdp.rewards(), mdp.transitions(), mdp.discount(), &v, alpha);
        iterations += 1;
        let diff = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = next.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        // below a few ulps of the values the residual is rounding noise
        let floor = 8.0 * f64::EPSILON * scale;
        if diff <= residual.max(floor) {
            return Ok(StationarySolution { values: next, rule, residual: diff, iterations });
        }
        if iterations >= MAX_VI_ITERATIONS {
            return Err(RasrError::Internal(format!(
                "value iteration did not reach residual {residual} within {MAX_VI_ITERATIONS} iterations"
            )));
        }
        v = next;
    }
}

/// Risk-neutral value iteration to sup-norm Bellman residual `≤ residual`.
///
/// The returned values are the last iterate and the rule is greedy to the
/// previous one, so `‖v - v^∞‖ ≤ residual·γ/(1-γ)`.
pub fn risk_neutral_vi(mdp: &Mdp, residual: f64) -> Result<StationarySolution> {
    stationary_fixed_point(mdp, residual, RiskLevel::Neutral)
}

/// Worst-case (`α = ∞`) infinite-horizon solve.
///
/// `ERM^∞` is the essential infimum at every step, so the decaying schedule
/// stays at infinity and the problem is a stationary robust MDP over the
/// support of `p̄`.
pub fn solve_robust_infinite(ensemble: &ModelEnsemble, tolerance: f64) -> Result<ErmSolveReport> {
    check_infinite(ensemble)?;
    if !(tolerance > 0.0) {
        return Err(domain(format!("tolerance must be positive, got {tolerance}")));
    }
    let gamma = ensemble.discount();
    let mean = ensemble.mean_mdp();
    let residual = stationary_residual_target(tolerance, gamma);
    let sol = stationary_fixed_point(&mean, residual, RiskLevel::Infinite)?;
    let objective = sol.values[ensemble.initial_state()];
    Ok(ErmSolveReport {
        alpha: RiskLevel::Infinite,
        plan: PolicyPlan::stationary(sol.rule),
        values: ValueSeries {
            values: vec![sol.values],
            risk_levels: Vec::new(),
            terminal: TerminalKind::RobustFixedPoint,
        },
        objective,
        loss_bound: Some(sol.residual * gamma / (1.0 - gamma)),
        horizon_used: 0,
        stationary_residual: Some(sol.residual),
    })
}

/// `ERM^α` value series of a deterministic plan over `horizon` steps with zero terminal.
pub fn evaluate_policy_erm(
    ensemble: &ModelEnsemble,
    plan: &PolicyPlan,
    alpha: RiskLevel,
    horizon: usize,
) -> Result<ValueSeries> {
    let zeros = vec![0.0; ensemble.n_states()];
    evaluate_inner(ensemble, plan, alpha, horizon, zeros, TerminalKind::Zero)
}

/// As [`evaluate_policy_erm`] with a caller-supplied terminal value.
pub fn evaluate_policy_erm_from(
    ensemble: &ModelEnsemble,
    plan: &PolicyPlan,
    alpha: RiskLevel,
    horizon: usize,
    terminal: &[f64],
) -> Result<ValueSeries> {
    check_terminal(ensemble, terminal)?;
    evaluate_inner(ensemble, plan, alpha, horizon, terminal.to_vec(), TerminalKind::UserSupplied)
}

fn evaluate_inner(
    ensemble: &ModelEnsemble,
    plan: &PolicyPlan,
    alpha: RiskLevel,
    horizon: usize,
    terminal: Vec<f64>,
    kind: TerminalKind,
) -> Result<ValueSeries> {
    ensemble.validate()?;
    plan.validate(ensemble.n_states(), ensemble.n_actions())?;
    if !plan.covers(horizon) {
        return Err(validation(format!(
            "plan has {} rules and no tail rule; horizon {horizon} is not covered",
            plan.rules.len()
        )));
    }
    let means = MeanModels::new(ensemble, horizon)?;
    let levels = decaying_levels(alpha, ensemble.discount(), horizon);
    let mut values = vec![Vec::new(); horizon + 1];
    values[horizon] = terminal;
    for t in (0..horizon).rev() {
        let rule = plan.rule_at(t).expect("coverage checked");
        values[t] = policy_backup_with(ensemble.rewards(), means.at(t), ensemble.discount(), &values[t + 1], levels[t], rule);
    }
    Ok(ValueSeries { values, risk_levels: levels, terminal: kind })
}
