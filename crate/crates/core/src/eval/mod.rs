//! Monte-Carlo evaluation of plans and empirical risk reporting.

pub mod oracle;
mod rng;

pub use oracle::{brute_force_oracle, evaluate_randomized_erm, return_distribution, OracleResult};
pub use rng::episode_rng;

use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::erm::{infinite_pipeline, solve_robust_infinite, ErmSolveReport, InfiniteOptions, Schedule};
use crate::error::{domain, validation, Result};
use crate::mdp::{ModelEnsemble, PolicyPlan, Transitions};
use crate::risk::{cvar, evar, var, ConfidenceLevel, DiscreteDistribution, RiskLevel};

/// Samples smaller than this carry a wide-confidence warning.
pub const MIN_RELIABLE_EPISODES: usize = 100;

/// Dynamics used when rolling out episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RolloutModel {
    /// Draw a fresh model from the posterior at every step.
    Ensemble,
    /// Step with the posterior-mean transition table.
    Mean,
}

/// Realized discounted returns of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSample {
    pub returns: Vec<f64>,
    pub episodes: usize,
    pub horizon: usize,
    pub seed: u64,
    pub policy_tag: String,
    pub rollout: RolloutModel,
    /// `γ^H·Δr/(1-γ)` when `γ < 1`: bound on the error from truncating at `H`.
    pub truncation_bias_bound: Option<f64>,
}

impl ReturnSample {
    /// Wraps externally produced returns.
    pub fn from_returns(returns: Vec<f64>, policy_tag: impl Into<String>) -> Result<Self> {
        if returns.is_empty() {
            return Err(validation("return sample is empty"));
        }
        if returns.iter().any(|r| !r.is_finite()) {
            return Err(validation("return sample contains non-finite values"));
        }
        Ok(Self {
            episodes: returns.len(),
            returns,
            horizon: 0,
            seed: 0,
            policy_tag: policy_tag.into(),
            rollout: RolloutModel::Ensemble,
            truncation_bias_bound: None,
        })
    }

    pub fn to_distribution(&self) -> Result<DiscreteDistribution> {
        DiscreteDistribution::uniform(self.returns.clone())
    }

    /// `episode,return` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,return\n");
        for (i, r) in self.returns.iter().enumerate() {
            out.push_str(&format!("{i},{}\n", crate::artifact::fmt_f64(*r)));
        }
        out
    }
}

/// Cumulative tables for inverse-CDF sampling.
struct Sampler {
    /// Cumulative rows per model, `[(s*A + a)*S + s']`.
    cumulative: Vec<Vec<f64>>,
    model_cdf: Vec<Vec<f64>>,
    n_states: usize,
    n_actions: usize,
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    // the last supported entry absorbs rounding so every u in [0,1) maps somewhere valid
    if let Some(last) = weights.iter().rposition(|&w| w > 0.0) {
        out[last..].iter_mut().for_each(|c| *c = f64::INFINITY);
    }
    out
}

fn cumulative_rows(t: &Transitions) -> Vec<f64> {
    t.as_slice().chunks(t.n_states()).flat_map(cumulative).collect()
}

#[inline]
fn draw(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u)
}

impl Sampler {
    fn new(ensemble: &ModelEnsemble, rollout: RolloutModel, horizon: usize) -> Self {
        let tables = match rollout {
            RolloutModel::Mean if ensemble.is_stationary() => vec![cumulative_rows(&ensemble.mean_model())],
            RolloutModel::Mean => (0..horizon).map(|t| cumulative_rows(&ensemble.mean_model_at(t))).collect(),
            RolloutModel::Ensemble => ensemble.models().iter().map(cumulative_rows).collect(),
        };
        let model_cdf = match rollout {
            RolloutModel::Mean => Vec::new(),
            RolloutModel::Ensemble if ensemble.is_stationary() => vec![cumulative(ensemble.weights())],
            RolloutModel::Ensemble => (0..horizon).map(|t| cumulative(ensemble.weights_at(t))).collect(),
        };
        Self { cumulative: tables, model_cdf, n_states: ensemble.n_states(), n_actions: ensemble.n_actions() }
    }

    #[inline]
    fn next_state<R: RngExt>(&self, rng: &mut R, t: usize, s: usize, a: usize) -> usize {
        let table = if self.model_cdf.is_empty() {
            &self.cumulative[t.min(self.cumulative.len() - 1)]
        } else {
            let weights = &self.model_cdf[t.min(self.model_cdf.len() - 1)];
            &self.cumulative[draw(weights, rng.random::<f64>())]
        };
        let start = (s * self.n_actions + a) * self.n_states;
        draw(&table[start..start + self.n_states], rng.random::<f64>())
    }
}

/// Rolls out `episodes` episodes of `plan` from `s₀` for `horizon` steps.
///
/// Episode `i` draws from ChaCha stream `i` of `seed`, so the sample is
/// identical for any thread count.
pub fn simulate(
    ensemble: &ModelEnsemble,
    plan: &PolicyPlan,
    episodes: usize,
    horizon: usize,
    seed: u64,
    rollout: RolloutModel,
) -> Result<ReturnSample> {
    simulate_tagged(ensemble, plan, episodes, horizon, seed, rollout, "plan")
}

pub fn simulate_tagged(
    ensemble: &ModelEnsemble,
    plan: &PolicyPlan,
    episodes: usize,
    horizon: usize,
    seed: u64,
    rollout: RolloutModel,
    policy_tag: &str,
) -> Result<ReturnSample> {
    ensemble.validate()?;
    if horizon == 0 {
        return Err(domain("simulation horizon must be positive"));
    }
    if episodes == 0 {
        return Err(domain("simulation needs at least one episode"));
    }
    plan.validate(ensemble.n_states(), ensemble.n_actions())?;
    if !plan.covers(horizon) {
        return Err(validation(format!("plan does not cover horizon {horizon}")));
    }
    if let Some(w) = ensemble.step_weights() {
        if w.len() < horizon {
            return Err(validation(format!("per-step weights cover {} steps, horizon is {horizon}", w.len())));
        }
    }

    let sampler = Sampler::new(ensemble, rollout, horizon);
    let gamma = ensemble.discount();
    let s0 = ensemble.initial_state();
    let run = |episode: usize| {
        let mut rng = episode_rng(seed, episode as u64);
        let mut s = s0;
        let mut ret = 0.0;
        let mut disc = 1.0;
        for t in 0..horizon {
            let a = plan.action(t, s).expect("coverage checked");
            ret += disc * ensemble.reward(s, a);
            disc *= gamma;
            if t + 1 < horizon {
                s = sampler.next_state(&mut rng, t, s, a);
            }
        }
        ret
    };
    let returns: Vec<f64> = (0..episodes).into_par_iter().map(run).collect();

    let truncation_bias_bound =
        (gamma < 1.0).then(|| gamma.powf(horizon as f64) * ensemble.reward_span() / (1.0 - gamma));
    Ok(ReturnSample {
        returns,
        episodes,
        horizon,
        seed,
        policy_tag: policy_tag.to_owned(),
        rollout,
        truncation_bias_bound,
    })
}

/// Empirical risk at one confidence level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRisk {
    pub beta: ConfidenceLevel,
    pub var: f64,
    pub cvar: f64,
    pub evar: f64,
    pub evar_alpha: RiskLevel,
    /// Delta-method standard error of the empirical EVaR.
    pub evar_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskReport {
    pub policy_tag: String,
    pub episodes: usize,
    pub mean: f64,
    pub mean_std_error: f64,
    pub levels: Vec<LevelRisk>,
    /// Set when the sample is too small for tail measures to mean much.
    pub wide_confidence_warning: bool,
    pub truncation_bias_bound: Option<f64>,
}

impl RiskReport {
    /// `measure,level,value` rows.
    pub fn to_csv(&self) -> String {
        use crate::artifact::fmt_f64;
        let mut out = String::from("measure,level,value\n");
        out.push_str(&format!("mean,,{}\n", fmt_f64(self.mean)));
        for l in &self.levels {
            let b = fmt_f64(l.beta.value());
            out.push_str(&format!("var,{b},{}\n", fmt_f64(l.var)));
            out.push_str(&format!("cvar,{b},{}\n", fmt_f64(l.cvar)));
            out.push_str(&format!("evar,{b},{}\n", fmt_f64(l.evar)));
        }
        out
    }
}

/// Standard error of the empirical `ERM^α` of an equal-weight sample.
///
/// By the envelope theorem this is also the first-order standard error of the
/// empirical EVaR when `α` is its maximizer.
pub fn erm_standard_error(returns: &[f64], alpha: RiskLevel) -> f64 {
    let n = returns.len() as f64;
    if returns.len() < 2 {
        return 0.0;
    }
    match alpha {
        RiskLevel::Infinite => 0.0,
        RiskLevel::Neutral => {
            let mean = returns.iter().sum::<f64>() / n;
            let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        }
        RiskLevel::Finite(a) => {
            let lo = returns.iter().copied().fold(f64::INFINITY, f64::min);
            let w: Vec<f64> = returns.iter().map(|r| (-a * (r - lo)).exp()).collect();
            let mean = w.iter().sum::<f64>() / n;
            let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt() / (a * mean)
        }
    }
}

/// VaR, CVaR and EVaR of the sample at each level, plus the mean.
pub fn risk_report(sample: &ReturnSample, levels: &[ConfidenceLevel]) -> Result<RiskReport> {
    let dist = sample.to_distribution()?;
    let levels = levels
        .iter()
        .map(|&beta| {
            let e = evar(&dist, beta);
            LevelRisk {
                beta,
                var: var(&dist, beta),
                cvar: cvar(&dist, beta),
                evar: e.value,
                evar_alpha: e.alpha,
                evar_std_error: erm_standard_error(&sample.returns, e.alpha),
            }
        })
        .collect();
    Ok(RiskReport {
        policy_tag: sample.policy_tag.clone(),
        episodes: sample.returns.len(),
        mean: dist.mean(),
        mean_std_error: erm_standard_error(&sample.returns, RiskLevel::Neutral),
        levels,
        wide_confidence_warning: sample.returns.len() < MIN_RELIABLE_EPISODES,
        truncation_bias_bound: sample.truncation_bias_bound,
    })
}

/// ERM planning with the risk level held constant across time.
///
/// Same pipeline as the decaying solver (horizon from the tolerance,
/// risk-neutral terminal value and tail) but every backup uses `α`. No loss
/// bound is reported. At `α = ∞` the two schedules coincide and the robust
/// stationary solve is used.
pub fn naive_baseline(ensemble: &ModelEnsemble, alpha: RiskLevel, tolerance: f64) -> Result<ErmSolveReport> {
    if alpha.is_infinite() {
        let mut report = solve_robust_infinite(ensemble, tolerance)?;
        report.loss_bound = None;
        return Ok(report);
    }
    infinite_pipeline(ensemble, alpha, &InfiniteOptions::new(tolerance), Schedule::Constant)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::erm::{solve_infinite, risk_neutral_vi};

    fn deterministic() -> ModelEnsemble {
        let t = Transitions::new(2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        ModelEnsemble::new(vec![1.0, 3.0], vec![t], vec![1.0], 0.5, 0).unwrap()
    }

    #[test]
    fn deterministic_returns_are_analytic() {
        let e = deterministic();
        let plan = PolicyPlan::stationary(vec![0, 0]);
        let sample = simulate(&e, &plan, 50, 4, 9, RolloutModel::Ensemble).unwrap();
        let expected = 1.0 + 0.5 * 3.0 + 0.25 * 1.0 + 0.125 * 3.0;
        assert!(sample.returns.iter().all(|r| *r == expected));
        assert_eq!(sample.episodes, 50);
    }

    #[test]
    fn simulation_errors() {
        let e = deterministic();
        let plan = PolicyPlan::stationary(vec![0, 0]);
        assert!(simulate(&e, &plan, 10, 0, 1, RolloutModel::Mean).is_err());
        assert!(simulate(&e, &plan, 0, 3, 1, RolloutModel::Mean).is_err());
        let short = PolicyPlan { rules: vec![vec![0, 0]], tail_rule: None };
        assert!(simulate(&e, &short, 10, 3, 1, RolloutModel::Mean).is_err());
    }

    #[test]
    fn draw_skips_null_entries() {
        let cdf = cumulative(&[0.0, 0.5, 0.0, 0.5, 0.0]);
        assert_eq!(draw(&cdf, 0.0), 1);
        assert_eq!(draw(&cdf, 0.49), 1);
        assert_eq!(draw(&cdf, 0.5), 3);
        assert_eq!(draw(&cdf, 0.999_999_999), 3);
    }

    #[test]
    fn constant_sample_report() {
        let sample = ReturnSample::from_returns(vec![2.5; 10], "c").unwrap();
        let levels: Vec<_> = [0.0, 0.5, 0.9].iter().map(|b| ConfidenceLevel::new(*b).unwrap()).collect();
        let rep = risk_report(&sample, &levels).unwrap();
        assert_eq!(rep.mean, 2.5);
        for l in &rep.levels {
            assert_eq!((l.var, l.cvar, l.evar), (2.5, 2.5, 2.5));
        }
        assert!(rep.wide_confidence_warning);
    }

    #[test]
    fn uniform_sample_report() {
        let sample = ReturnSample::from_returns((1..=10).map(f64::from).collect(), "u").unwrap();
        let rep = risk_report(&sample, &[ConfidenceLevel::new(0.9).unwrap()]).unwrap();
        assert_eq!(rep.levels[0].var, 2.0);
        assert!((rep.levels[0].cvar - 1.0).abs() < 1e-12);
        assert!(ReturnSample::from_returns(vec![], "e").is_err());
        let csv = rep.to_csv();
        assert!(csv.starts_with("measure,level,value\nmean,,"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn naive_at_zero_is_risk_neutral() {
        let t = Transitions::new(2, 2, vec![1.0, 0.0, 0.3, 0.7, 0.0, 1.0, 0.5, 0.5]).unwrap();
        let e = ModelEnsemble::new(vec![0.1, 0.0, 1.0, -0.5], vec![t], vec![1.0], 0.9, 0).unwrap();
        let rep = naive_baseline(&e, RiskLevel::Neutral, 1e-8).unwrap();
        let vi = risk_neutral_vi(&e.mean_mdp(), 1e-12).unwrap();
        assert!((rep.objective - vi.values[0]).abs() < 1e-8);
        assert_eq!(rep.loss_bound, None);
    }

    #[test]
    fn naive_matches_rasr_on_deterministic_mdp() {
        let t = Transitions::new(2, 2, vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        let e = ModelEnsemble::new(vec![0.5, 0.2, -1.0, 3.0], vec![t], vec![1.0], 0.8, 0).unwrap();
        for a in [0.5, 3.0] {
            let alpha = RiskLevel::Finite(a);
            let naive = naive_baseline(&e, alpha, 1e-6).unwrap();
            let rasr = solve_infinite(&e, alpha, 1e-6).unwrap();
            assert_eq!(naive.plan, rasr.plan);
        }
    }
}
