//! EVaR planning by maximizing `h(α)` over a grid of ERM solves.
//!
//! ```text
//! max_π EVaR^β[R^π] = max_{α>0} h(α),   h(α) = max_π ERM^α[R^π] + log(1-β)/α
//! ```
//!
//! `h` is in general neither concave nor quasi-concave, so it is evaluated on
//! the grid `α_k = -log(1-β)/(k·δ)`, `k = 0…K` with `α_0 = ∞`, which is evenly
//! spaced in `1/α` and loses at most `δ` against the true maximum.

use rayon::prelude::*;
use serde::Serialize;

use crate::erm::{solve_finite, solve_infinite_with, solve_robust_infinite, ErmSolveReport, InfiniteOptions};
use crate::error::{domain, RasrError, Result};
use crate::mdp::{ModelEnsemble, PolicyPlan};
use crate::risk::{ConfidenceLevel, RiskLevel};

/// Descending risk levels for the EVaR search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaGrid {
    pub levels: Vec<RiskLevel>,
    pub delta: f64,
    pub beta: ConfidenceLevel,
    /// Index of the last level; `levels.len() == k + 1`.
    pub k: usize,
}

impl AlphaGrid {
    /// Grid covering returns of the given span.
    ///
    /// `K = ⌈√(-log(1-β)/8) · span / δ⌉`, at least 1. For `β = 0` the grid is
    /// the single risk-neutral level.
    pub fn for_return_span(beta: ConfidenceLevel, delta: f64, return_span: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(domain(format!("delta must be positive, got {delta}")));
        }
        if !(return_span >= 0.0) || !return_span.is_finite() {
            return Err(domain(format!("return span must be finite and nonnegative, got {return_span}")));
        }
        if beta.value() == 0.0 {
            return Ok(Self { levels: vec![RiskLevel::Neutral], delta, beta, k: 0 });
        }
        let neg_log_tail = -beta.log_tail();
        let bound = (neg_log_tail / 8.0).sqrt() * return_span / delta;
        let k = (bound.ceil() as usize).max(1);
        let mut levels = Vec::with_capacity(k + 1);
        levels.push(RiskLevel::Infinite);
        for i in 1..=k {
            levels.push(RiskLevel::new(neg_log_tail / (i as f64 * delta))?);
        }
        Ok(Self { levels, delta, beta, k })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Grid for an infinite-horizon problem with reward span `Δr` and discount `γ < 1`.
pub fn build_grid(beta: ConfidenceLevel, delta: f64, reward_span: f64, gamma: f64) -> Result<AlphaGrid> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(domain(format!("infinite-horizon grid needs discount in (0, 1), got {gamma}")));
    }
    AlphaGrid::for_return_span(beta, delta, reward_span / (1.0 - gamma))
}

/// Grid for a horizon-`T` problem; the return span is `Δr·min(T, 1/(1-γ))`.
pub fn build_grid_finite(
    beta: ConfidenceLevel,
    delta: f64,
    reward_span: f64,
    gamma: f64,
    horizon: usize,
) -> Result<AlphaGrid> {
    let effective = if gamma < 1.0 { (horizon as f64).min(1.0 / (1.0 - gamma)) } else { horizon as f64 };
    AlphaGrid::for_return_span(beta, delta, reward_span * effective)
}

/// How each grid point is solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum EvarMode {
    Finite { horizon: usize },
    Infinite { tolerance: f64 },
}

/// `h` evaluated at one grid level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HPoint {
    pub alpha: RiskLevel,
    /// `h(α)`; `None` when the inner solve could not be run within its cap.
    pub h: Option<f64>,
    /// `max_π ERM^α` from the inner solve.
    pub erm_objective: Option<f64>,
    pub horizon_used: Option<usize>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvarSolveReport {
    pub beta: ConfidenceLevel,
    pub mode: EvarMode,
    pub plan: PolicyPlan,
    pub best_alpha: RiskLevel,
    /// The `(α_k, h(α_k))` curve in grid order.
    pub h_values: Vec<HPoint>,
    /// `max_k h(α_k)`.
    pub objective: f64,
    /// Suboptimality guarantee `δ`.
    pub guarantee: f64,
    pub grid_k: usize,
}

fn inner_solve(ensemble: &ModelEnsemble, alpha: RiskLevel, mode: EvarMode) -> Result<ErmSolveReport> {
    match mode {
        EvarMode::Finite { horizon } => solve_finite(ensemble, alpha, horizon, None),
        EvarMode::Infinite { tolerance } if alpha.is_infinite() => solve_robust_infinite(ensemble, tolerance),
        EvarMode::Infinite { tolerance } => solve_infinite_with(ensemble, alpha, &InfiniteOptions::new(tolerance)),
    }
}

/// `h(α) = max_π ERM^α[R^π] + log(1-β)/α`.
pub fn h_of_alpha(ensemble: &ModelEnsemble, alpha: RiskLevel, beta: ConfidenceLevel, mode: EvarMode) -> Result<f64> {
    if alpha.is_neutral() && beta.value() > 0.0 {
        return Err(domain("h(0) is -inf for beta > 0"));
    }
    let rep = inner_solve(ensemble, alpha, mode)?;
    Ok(rep.objective + alpha.evar_penalty(beta))
}

/// Index of the best valid point: largest `h`, ties toward the larger `α`.
///
/// Independent of the order of `points`.
pub fn select_best(points: &[HPoint]) -> Option<usize> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let Some(h) = p.h.filter(|_| p.valid) else { continue };
        let a = p.alpha.value();
        let better = match best {
            None => true,
            Some((_, bh, ba)) => h > bh || (h == bh && a > ba),
        };
        if better {
            best = Some((i, h, a));
        }
    }
    best.map(|b| b.0)
}

/// Grid appropriate for `mode` on this ensemble.
pub fn grid_for(ensemble: &ModelEnsemble, beta: ConfidenceLevel, delta: f64, mode: EvarMode) -> Result<AlphaGrid> {
    let span = ensemble.reward_span();
    match mode {
        EvarMode::Finite { horizon } => build_grid_finite(beta, delta, span, ensemble.discount(), horizon),
        EvarMode::Infinite { .. } => build_grid(beta, delta, span, ensemble.discount()),
    }
}

/// Infinite-horizon EVaR plan with guarantee `δ`.
pub fn solve_evar(ensemble: &ModelEnsemble, beta: ConfidenceLevel, delta: f64, tolerance: f64) -> Result<EvarSolveReport> {
    solve_evar_with(ensemble, beta, delta, EvarMode::Infinite { tolerance })
}

pub fn solve_evar_with(ensemble: &ModelEnsemble, beta: ConfidenceLevel, delta: f64, mode: EvarMode) -> Result<EvarSolveReport> {
    if let EvarMode::Infinite { tolerance } = mode {
        if !(tolerance > 0.0) {
            return Err(domain(format!("tolerance must be positive, got {tolerance}")));
        }
    }
    let grid = grid_for(ensemble, beta, delta, mode)?;
    if grid.is_empty() {
        return Err(RasrError::Internal("empty risk-level grid".into()));
    }

    // Grid points are independent solves; results are collected in grid order.
    let solved: Vec<Result<(HPoint, Option<ErmSolveReport>)>> = grid
        .levels
        .par_iter()
        .map(|&alpha| match inner_solve(ensemble, alpha, mode) {
            Ok(rep) => Ok((
                HPoint {
                    alpha,
                    h: Some(rep.objective + alpha.evar_penalty(beta)),
                    erm_objective: Some(rep.objective),
                    horizon_used: Some(rep.horizon_used),
                    valid: true,
                },
                Some(rep),
            )),
            Err(RasrError::HorizonCap { .. }) => Ok((
                HPoint { alpha, h: None, erm_objective: None, horizon_used: None, valid: false },
                None,
            )),
            Err(e) => Err(e),
        })
        .collect();

    let mut points = Vec::with_capacity(solved.len());
    let mut reports = Vec::with_capacity(solved.len());
    for r in solved {
        let (p, rep) = r?;
        points.push(p);
        reports.push(rep);
    }
    let best = select_best(&points)
        .ok_or_else(|| RasrError::Internal("no grid point could be solved within the horizon cap".into()))?;
    let plan = reports[best]
        .take()
        .expect("valid point carries its report")
        .plan;
    Ok(EvarSolveReport {
        beta,
        mode,
        plan,
        best_alpha: points[best].alpha,
        objective: points[best].h.expect("valid point has h"),
        h_values: points,
        guarantee: delta,
        grid_k: grid.k,
    })
}
