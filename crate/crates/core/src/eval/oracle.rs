//! Exhaustive reference computations for small problems.
//!
//! Nothing here calls the dynamic-programming solvers; the results are built
//! from explicit return distributions under the mean model.

use crate::error::{validation, RasrError, Result};
use crate::mdp::{ModelEnsemble, PolicyPlan, Transitions};
use crate::risk::{erm_weighted, DiscreteDistribution, RiskLevel};

/// Cap on `(#plans) × (#trajectories)` for [`brute_force_oracle`].
pub const ORACLE_SIZE_GUARD: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub objective: f64,
    pub plan: PolicyPlan,
}

fn step_models(ensemble: &ModelEnsemble, horizon: usize) -> Vec<Transitions> {
    if ensemble.is_stationary() {
        vec![ensemble.mean_model()]
    } else {
        (0..horizon).map(|t| ensemble.mean_model_at(t)).collect()
    }
}

fn enumerate(
    ensemble: &ModelEnsemble,
    models: &[Transitions],
    rules: &[Vec<usize>],
    outcomes: &mut Vec<f64>,
    probs: &mut Vec<f64>,
) {
    let gamma = ensemble.discount();
    let horizon = rules.len();
    // depth-first over trajectories, carrying (t, s, discounted return, probability)
    let mut stack = vec![(0usize, ensemble.initial_state(), 0.0f64, 1.0f64, 1.0f64)];
    while let Some((t, s, ret, p, disc)) = stack.pop() {
        let a = rules[t][s];
        let ret = ret + disc * ensemble.reward(s, a);
        if t + 1 == horizon {
            outcomes.push(ret);
            probs.push(p);
            continue;
        }
        let row = models[t.min(models.len() - 1)].row(s, a);
        for (next, &q) in row.iter().enumerate().rev() {
            if q > 0.0 {
                stack.push((t + 1, next, ret, p * q, disc * gamma));
            }
        }
    }
}

/// Exact distribution of the `horizon`-step discounted return of `plan` under
/// the mean model.
pub fn return_distribution(ensemble: &ModelEnsemble, plan: &PolicyPlan, horizon: usize) -> Result<DiscreteDistribution> {
    if horizon == 0 {
        return DiscreteDistribution::point(0.0);
    }
    plan.validate(ensemble.n_states(), ensemble.n_actions())?;
    let rules: Vec<Vec<usize>> = (0..horizon)
        .map(|t| plan.rule_at(t).map(<[usize]>::to_vec))
        .collect::<Option<_>>()
        .ok_or_else(|| validation(format!("plan does not cover horizon {horizon}")))?;
    let models = step_models(ensemble, horizon);
    let (mut outcomes, mut probs) = (Vec::new(), Vec::new());
    enumerate(ensemble, &models, &rules, &mut outcomes, &mut probs);
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    DiscreteDistribution::new(outcomes, probs)
}

/// Best `ERM^α` of the `horizon`-step return over every Markov deterministic
/// plan, found by enumeration. Ties keep the first plan in enumeration order.
pub fn brute_force_oracle(ensemble: &ModelEnsemble, alpha: RiskLevel, horizon: usize) -> Result<OracleResult> {
    ensemble.validate()?;
    if horizon == 0 {
        return Err(validation("oracle horizon must be positive"));
    }
    let (n_s, n_a) = (ensemble.n_states(), ensemble.n_actions());
    let n_plans = (n_a as f64).powf((n_s * horizon) as f64);
    let n_traj = (n_s as f64).powf(horizon as f64);
    if n_plans * n_traj > ORACLE_SIZE_GUARD {
        return Err(RasrError::SizeGuard(format!(
            "{n_plans} plans x {n_traj} trajectories exceeds {ORACLE_SIZE_GUARD}"
        )));
    }
    let models = step_models(ensemble, horizon);
    let slots = n_s * horizon;
    let mut digits = vec![0usize; slots];
    let mut best: Option<OracleResult> = None;
    let (mut outcomes, mut probs) = (Vec::new(), Vec::new());
    loop {
        let rules: Vec<Vec<usize>> = digits.chunks(n_s).map(<[usize]>::to_vec).collect();
        outcomes.clear();
        probs.clear();
        enumerate(ensemble, &models, &rules, &mut outcomes, &mut probs);
        let value = erm_weighted(&outcomes, &probs, alpha);
        if best.as_ref().is_none_or(|b| value > b.objective) {
            best = Some(OracleResult { objective: value, plan: PolicyPlan { rules, tail_rule: None } });
        }
        // mixed-radix increment, first slot fastest
        let mut i = 0;
        while i < slots {
            digits[i] += 1;
            if digits[i] < n_a {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
        if i == slots {
            break;
        }
    }
    Ok(best.expect("at least one plan"))
}

/// `ERM^α` of the `horizon`-step return of a randomized Markov policy under the
/// mean model, for every start state.
///
/// `policy[t][s][a]` is the probability of `a` in `s` at step `t`. The risk in
/// state `s` at step `t` is taken jointly over the action and the successor,
/// at level `α·γ^t`.
pub fn evaluate_randomized_erm(
    ensemble: &ModelEnsemble,
    policy: &[Vec<Vec<f64>>],
    alpha: RiskLevel,
) -> Result<Vec<f64>> {
    let (n_s, n_a) = (ensemble.n_states(), ensemble.n_actions());
    let horizon = policy.len();
    for rule in policy {
        if rule.len() != n_s || rule.iter().any(|d| d.len() != n_a) {
            return Err(validation("randomized policy has the wrong shape"));
        }
    }
    let gamma = ensemble.discount();
    let models = step_models(ensemble, horizon.max(1));
    let mut v = vec![0.0; n_s];
    let (mut outcomes, mut probs) = (Vec::new(), Vec::new());
    for t in (0..horizon).rev() {
        let level = alpha.scaled(gamma.powi(t as i32));
        let model = &models[t.min(models.len() - 1)];
        v = (0..n_s)
            .map(|s| {
                outcomes.clear();
                probs.clear();
                for (a, &pa) in policy[t][s].iter().enumerate() {
                    if pa <= 0.0 {
                        continue;
                    }
                    for (next, &q) in model.row(s, a).iter().enumerate() {
                        if q > 0.0 {
                            outcomes.push(ensemble.reward(s, a) + gamma * v[next]);
                            probs.push(pa * q);
                        }
                    }
                }
                erm_weighted(&outcomes, &probs, level)
            })
            .collect();
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::builtin_counterexample;

    #[test]
    fn counterexample_return_distribution() {
        let e = ModelEnsemble::point_mass(&builtin_counterexample());
        let risky = PolicyPlan::stationary(vec![1, 0, 0, 0]);
        let d = return_distribution(&e, &risky, 2).unwrap();
        let atoms = d.sorted_atoms();
        assert_eq!(atoms.len(), 2);
        assert_eq!(atoms[0].0, -2.0);
        assert!((atoms[0].1 - 0.02).abs() < 1e-15);
        assert_eq!(atoms[1].0, 1.0);
    }

    #[test]
    fn oracle_prefers_safe_under_high_risk() {
        let e = ModelEnsemble::point_mass(&builtin_counterexample());
        let neutral = brute_force_oracle(&e, RiskLevel::Neutral, 2).unwrap();
        assert!((neutral.objective - (0.98 - 0.04)).abs() < 1e-12);
        assert_eq!(neutral.plan.rules[0][0], 1);
        let robust = brute_force_oracle(&e, RiskLevel::Infinite, 2).unwrap();
        assert_eq!(robust.objective, 0.0);
        assert_eq!(robust.plan.rules[0][0], 0);
    }

    #[test]
    fn size_guard() {
        let e = ModelEnsemble::point_mass(&builtin_counterexample());
        assert!(matches!(brute_force_oracle(&e, RiskLevel::Neutral, 5), Err(RasrError::SizeGuard(_))));
    }

    #[test]
    fn deterministic_randomized_policy_matches_enumeration() {
        let e = ModelEnsemble::point_mass(&builtin_counterexample());
        let pick = |a: usize| vec![vec![if a == 0 { 1.0 } else { 0.0 }, if a == 1 { 1.0 } else { 0.0 }]; 4];
        let alpha = RiskLevel::Finite(1.5);
        let v = evaluate_randomized_erm(&e, &[pick(1), pick(0)], alpha).unwrap();
        let d = return_distribution(&e, &PolicyPlan::stationary(vec![1, 0, 0, 0]), 2).unwrap();
        assert!((v[0] - crate::risk::erm(&d, alpha)).abs() < 1e-12);
    }
}
