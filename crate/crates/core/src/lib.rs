//! Risk-averse planning for MDPs under a posterior ensemble of transition
//! models.
//!
//! [`erm`] solves entropic-risk objectives with a risk level that decays as
//! `α·γᵗ`, [`evar`] optimizes EVaR over a grid of ERM problems, and [`eval`]
//! estimates risk by simulation.
// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]


pub mod artifact;
pub mod cli;
pub mod erm;
pub mod error;
pub mod eval;
pub mod evar;
pub mod mdp;
pub mod risk;
pub mod search;

pub use erm::{solve_finite, solve_infinite, ErmSolveReport};
pub use error::{RasrError, Result};
pub use eval::{risk_report, simulate, ReturnSample, RiskReport, RolloutModel};
pub use evar::{solve_evar, EvarSolveReport};
pub use mdp::{Mdp, ModelEnsemble, PolicyPlan, Transitions};
pub use risk::{ConfidenceLevel, DiscreteDistribution, RiskLevel};
