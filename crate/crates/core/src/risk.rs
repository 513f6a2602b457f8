//! Risk measures on finite discrete distributions.
//!
//! Provides the entropic risk measure (ERM), entropic value-at-risk (EVaR),
//! value-at-risk (VaR) and conditional value-at-risk (CVaR) for distributions
//! with finitely many atoms, together with the Hoeffding gap that bounds how far
//! ERM can fall below the mean and the exponential-utility certainty-equivalent
//! transform.
//!
//! All measures follow the reward convention: larger outcomes are better, and a
//! risk-averse measure returns a value at most the mean.
//!
//! ```text
//! ERM^α[X]  = -α⁻¹ · log E[exp(-α·X)]
//! EVaR^β[X] = sup_{α>0} ERM^α[X] + α⁻¹ · log(1-β)
//! ```

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, validation, Result};
use crate::search::golden_section_max;

/// Below this value of `α·span` the ERM is replaced by the mean.
///
/// The Hoeffding gap bounds the substitution error by `α·span²/8 < 1.25e-9·span`.
pub const TINY_ALPHA_SPAN: f64 = 1e-8;

/// Tolerance on the probability simplex for [`DiscreteDistribution`].
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

/// Argument tolerance of the EVaR golden-section search over `ζ = 1/α`.
pub const EVAR_ZETA_TOL: f64 = 1e-10;

/// Risk-aversion parameter `α ∈ [0, ∞]`.
///
/// Zero (risk neutral) and infinity (worst case) are distinct states rather
/// than boundary floats, so `α = ∞` never leaks into arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskLevel {
    Neutral,
    Finite(f64),
    Infinite,
}

impl RiskLevel {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 0.0 {
            return Err(domain(format!("risk level must be in [0, inf], got {value}")));
        }
        Ok(if value == 0.0 {
            RiskLevel::Neutral
        } else if value.is_infinite() {
            RiskLevel::Infinite
        } else {
            RiskLevel::Finite(value)
        })
    }

    /// The level as an extended real (`f64::INFINITY` for the worst case).
    pub fn value(self) -> f64 {
        match self {
            RiskLevel::Neutral => 0.0,
            RiskLevel::Finite(a) => a,
            RiskLevel::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, RiskLevel::Infinite)
    }

    pub fn is_neutral(self) -> bool {
        matches!(self, RiskLevel::Neutral)
    }

    /// Multiplies the level by a nonnegative factor.
    ///
    /// A finite level that underflows becomes [`RiskLevel::Neutral`]; infinity
    /// stays infinite for any positive factor.
    pub fn scaled(self, factor: f64) -> Self {
        debug_assert!(factor >= 0.0);
        match self {
            RiskLevel::Neutral => RiskLevel::Neutral,
            RiskLevel::Infinite if factor > 0.0 => RiskLevel::Infinite,
            RiskLevel::Infinite => RiskLevel::Neutral,
            RiskLevel::Finite(a) => {
                let v = a * factor;
                if v == 0.0 {
                    RiskLevel::Neutral
                } else if v.is_infinite() {
                    RiskLevel::Infinite
                } else {
                    RiskLevel::Finite(v)
                }
            }
        }
    }

    /// The EVaR penalty `log(1-β)/α`, with `log(1-β)/∞ = 0` and `log(1)/0 = 0`.
    ///
    /// Returns `-∞` for `α = 0` with `β > 0`.
    pub fn evar_penalty(self, beta: ConfidenceLevel) -> f64 {
        let log_tail = beta.log_tail();
        match self {
            RiskLevel::Infinite => 0.0,
            RiskLevel::Finite(a) => log_tail / a,
            RiskLevel::Neutral if beta.value() == 0.0 => 0.0,
            RiskLevel::Neutral => f64::NEG_INFINITY,
        }
    }
}

impl PartialOrd for RiskLevel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.value().partial_cmp(&other.value())
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RiskLevel::Infinite => write!(f, "inf"),
            other => write!(f, "{}", other.value()),
        }
    }
}

impl FromStr for RiskLevel {
    type Err = crate::error::RasrError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if matches!(t.as_str(), "inf" | "infinity" | "+inf") {
            return Ok(RiskLevel::Infinite);
        }
        let v: f64 = t
            .parse()
            .map_err(|_| domain(format!("cannot parse risk level {s:?}")))?;
        RiskLevel::new(v)
    }
}

// JSON has no infinity, so the worst-case level is written as the string "inf".
impl Serialize for RiskLevel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RiskLevel::Infinite => serializer.serialize_str("inf"),
            other => serializer.serialize_f64(other.value()),
        }
    }
}

impl<'de> Deserialize<'de> for RiskLevel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(deserializer)? {
            Raw::Num(v) => RiskLevel::new(v),
            Raw::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// EVaR/VaR/CVaR confidence `β ∈ [0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct ConfidenceLevel(f64);

impl ConfidenceLevel {
    pub fn new(beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(domain(format!("confidence level must be in [0, 1), got {beta}")));
        }
        Ok(ConfidenceLevel(beta))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `log(1-β)`, which is `≤ 0`.
    pub fn log_tail(self) -> f64 {
        (-self.0).ln_1p()
    }
}

impl<'de> Deserialize<'de> for ConfidenceLevel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        ConfidenceLevel::new(v).map_err(serde::de::Error::custom)
    }
}

/// Finite distribution over real outcomes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteDistribution {
    outcomes: Vec<f64>,
    probabilities: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(outcomes: Vec<f64>, probabilities: Vec<f64>) -> Result<Self> {
        Self::checked(outcomes, probabilities, PROBABILITY_SUM_TOL)
    }

    fn checked(outcomes: Vec<f64>, probabilities: Vec<f64>, sum_tol: f64) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(validation("distribution has no outcomes"));
        }
        if outcomes.len() != probabilities.len() {
            return Err(validation(format!(
                "{} outcomes but {} probabilities",
                outcomes.len(),
                probabilities.len()
            )));
        }
        if let Some(x) = outcomes.iter().find(|x| !x.is_finite()) {
            return Err(validation(format!("outcome {x} is not finite")));
        }
        if let Some(p) = probabilities.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(validation(format!("probability {p} is not a finite nonnegative number")));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > sum_tol {
            return Err(validation(format!("probabilities sum to {total}, expected 1")));
        }
        Ok(Self { outcomes, probabilities })
    }

    /// Equal-weight distribution over `outcomes`.
    pub fn uniform(outcomes: Vec<f64>) -> Result<Self> {
        let n = outcomes.len();
        if n == 0 {
            return Err(validation("distribution has no outcomes"));
        }
        let probabilities = vec![1.0 / n as f64; n];
        // 1/n summed n times drifts by up to n ulps
        let tol = PROBABILITY_SUM_TOL.max(4.0 * n as f64 * f64::EPSILON);
        Self::checked(outcomes, probabilities, tol)
    }

    pub fn point(value: f64) -> Result<Self> {
        Self::new(vec![value], vec![1.0])
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn mean(&self) -> f64 {
        weighted_mean(&self.outcomes, &self.probabilities)
    }

    /// Smallest outcome carrying positive probability.
    pub fn min_supported(&self) -> f64 {
        support_bounds(&self.outcomes, &self.probabilities).0
    }

    /// Largest outcome carrying positive probability.
    pub fn max_supported(&self) -> f64 {
        support_bounds(&self.outcomes, &self.probabilities).1
    }

    pub fn span(&self) -> f64 {
        let (lo, hi) = support_bounds(&self.outcomes, &self.probabilities);
        hi - lo
    }

    /// The distribution of `c·X`.
    pub fn scale(&self, c: f64) -> Self {
        Self {
            outcomes: self.outcomes.iter().map(|x| c * x).collect(),
            probabilities: self.probabilities.clone(),
        }
    }

    /// The distribution of `X + c`.
    pub fn shift(&self, c: f64) -> Self {
        Self {
            outcomes: self.outcomes.iter().map(|x| x + c).collect(),
            probabilities: self.probabilities.clone(),
        }
    }

    /// Atoms sorted by outcome with equal outcomes merged and null atoms dropped.
    pub fn sorted_atoms(&self) -> Vec<(f64, f64)> {
        let mut atoms: Vec<(f64, f64)> = self
            .outcomes
            .iter()
            .copied()
            .zip(self.probabilities.iter().copied())
            .filter(|&(_, p)| p > 0.0)
            .collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, p) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += p,
                _ => merged.push((x, p)),
            }
        }
        merged
    }
}

fn support_bounds(outcomes: &[f64], probabilities: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (&x, &p) in outcomes.iter().zip(probabilities) {
        if p > 0.0 {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (lo, hi)
}

fn weighted_mean(outcomes: &[f64], probabilities: &[f64]) -> f64 {
    // centred on the first atom so that constant outcomes come back exactly
    let total: f64 = probabilities.iter().sum();
    let x0 = outcomes.first().copied().unwrap_or(0.0);
    let s: f64 = outcomes.iter().zip(probabilities).map(|(x, p)| (x - x0) * p).sum();
    x0 + s / total
}

/// ERM of a validated distribution.
pub fn erm(dist: &DiscreteDistribution, alpha: RiskLevel) -> f64 {
    erm_weighted(&dist.outcomes, &dist.probabilities, alpha)
}

/// ERM on raw slices, for hot loops that already hold a valid distribution.
///
/// `probabilities` must be nonnegative with a positive sum; they are
/// normalized internally so that row drift does not bias small-α values.
pub fn erm_weighted(outcomes: &[f64], probabilities: &[f64], alpha: RiskLevel) -> f64 {
    debug_assert_eq!(outcomes.len(), probabilities.len());
    let (lo, hi) = support_bounds(outcomes, probabilities);
    if lo == hi {
        return lo;
    }
    let a = match alpha {
        RiskLevel::Infinite => return lo,
        RiskLevel::Neutral => return weighted_mean(outcomes, probabilities),
        RiskLevel::Finite(a) => a,
    };
    let mean = weighted_mean(outcomes, probabilities);
    if a * (hi - lo) < TINY_ALPHA_SPAN {
        return mean;
    }

    let total: f64 = probabilities.iter().sum();
    // Shift by the smallest supported outcome: every exponent is ≤ 0 and the
    // minimum atom contributes exp(0), so the sum never overflows or vanishes.
    let log_mgf = if a * (hi - lo) < 1.0 {
        let u: f64 = outcomes
            .iter()
            .zip(probabilities)
            .filter(|&(_, &p)| p > 0.0)
            .map(|(&x, &p)| p * (-a * (x - lo)).exp_m1())
            .sum();
        (u / total).ln_1p()
    } else {
        let s: f64 = outcomes
            .iter()
            .zip(probabilities)
            .filter(|&(_, &p)| p > 0.0)
            .map(|(&x, &p)| p * (-a * (x - lo)).exp())
            .sum();
        (s / total).ln()
    };
    (lo - log_mgf / a).clamp(lo, mean)
}

/// EVaR value together with the maximizing risk level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvarValue {
    pub value: f64,
    pub alpha: RiskLevel,
}

/// EVaR of a validated distribution.
pub fn evar(dist: &DiscreteDistribution, beta: ConfidenceLevel) -> EvarValue {
    evar_weighted(&dist.outcomes, &dist.probabilities, beta)
}

/// EVaR on raw slices; see [`erm_weighted`] for the preconditions.
///
/// Maximizes `g(ζ) = ERM^{1/ζ}[X] + ζ·log(1-β)`, which is concave in `ζ`. For
/// `ζ > span / -log(1-β)` the objective is below the essential infimum `g(0)`,
/// so that value closes the bracket.
pub fn evar_weighted(outcomes: &[f64], probabilities: &[f64], beta: ConfidenceLevel) -> EvarValue {
    if beta.value() == 0.0 {
        return EvarValue { value: weighted_mean(outcomes, probabilities), alpha: RiskLevel::Neutral };
    }
    let (lo, hi) = support_bounds(outcomes, probabilities);
    if lo == hi {
        return EvarValue { value: lo, alpha: RiskLevel::Infinite };
    }
    let log_tail = beta.log_tail();
    let zeta_hi = (hi - lo) / -log_tail;
    let objective = |zeta: f64| {
        if zeta <= 0.0 {
            lo
        } else {
            erm_weighted(outcomes, probabilities, RiskLevel::Finite(1.0 / zeta)) + zeta * log_tail
        }
    };
    let best = golden_section_max(objective, 0.0, zeta_hi, EVAR_ZETA_TOL);
    let alpha = if best.x <= 0.0 { RiskLevel::Infinite } else { RiskLevel::Finite(1.0 / best.x) };
    EvarValue { value: best.value.clamp(lo, weighted_mean(outcomes, probabilities)), alpha }
}

/// Tolerance applied to the CDF comparison in [`var`].
///
/// A cumulative sum that equals `1-β` up to rounding is treated as equal, so
/// the strict inequality of the quantile definition is not decided by noise.
pub const VAR_CDF_TOL: f64 = 1e-12;

/// `inf { x : F(x) > 1-β }`; for `β = 0` the top of the support.
pub fn var(dist: &DiscreteDistribution, beta: ConfidenceLevel) -> f64 {
    let atoms = dist.sorted_atoms();
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    let threshold = 1.0 - beta.value();
    let mut cdf = 0.0;
    for &(x, p) in &atoms {
        cdf += p / total;
        if cdf > threshold + VAR_CDF_TOL {
            return x;
        }
    }
    atoms.last().map(|a| a.0).unwrap_or(f64::NAN)
}

/// Mean of the worst `1-β` probability mass.
pub fn cvar(dist: &DiscreteDistribution, beta: ConfidenceLevel) -> f64 {
    let atoms = dist.sorted_atoms();
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    let tail = 1.0 - beta.value();
    let mut remaining = tail;
    let mut acc = 0.0;
    for &(x, p) in &atoms {
        let p = p / total;
        if p >= remaining {
            acc += remaining * x;
            remaining = 0.0;
            break;
        }
        acc += p * x;
        remaining -= p;
    }
    if remaining > 0.0 {
        // rounding left a sliver of tail mass past the last atom
        acc += remaining * atoms.last().map(|a| a.0).unwrap_or(0.0);
    }
    let (lo, hi) = (atoms[0].0, atoms[atoms.len() - 1].0);
    (acc / tail).clamp(lo, hi)
}

/// Hoeffding gap `α·span²/8`: `E[X] - gap ≤ ERM^α[X]` for `X` with that span.
pub fn hoeffding_gap(alpha: RiskLevel, span: f64) -> Result<f64> {
    if !(span >= 0.0) || !span.is_finite() {
        return Err(domain(format!("span must be finite and nonnegative, got {span}")));
    }
    match alpha {
        RiskLevel::Infinite => Err(domain("Hoeffding gap is unbounded at alpha = inf")),
        other => Ok(other.value() * span * span / 8.0),
    }
}

/// Exponential utility `u(x) = (1 - e^{-αx})/α` with `ERM^α[X] = u⁻¹(E[u(X)])`.
#[derive(Debug, Clone, Copy)]
pub struct ExponentialUtility {
    alpha: f64,
}

impl ExponentialUtility {
    pub fn new(alpha: RiskLevel) -> Result<Self> {
        match alpha {
            RiskLevel::Finite(a) => Ok(Self { alpha: a }),
            other => Err(domain(format!("certainty equivalent needs finite positive alpha, got {other}"))),
        }
    }

    pub fn utility(&self, x: f64) -> f64 {
        -(-self.alpha * x).exp_m1() / self.alpha
    }

    pub fn inverse(&self, z: f64) -> Result<f64> {
        let arg = 1.0 - self.alpha * z;
        if !(arg > 0.0) {
            return Err(domain(format!("utility value {z} outside the range of u (need 1 - alpha*z > 0)")));
        }
        Ok(-(-self.alpha * z).ln_1p() / self.alpha)
    }
}
