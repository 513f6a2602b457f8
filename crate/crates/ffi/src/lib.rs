//! C ABI over the `rasr` planning library.
//!
//! Objects cross the boundary as opaque handles created by `rasr_*` constructors
//! and released by the matching `*_free`. Every function returns a
//! [`RasrStatus`]; on failure [`rasr_last_error_message`] describes the error
//! raised most recently on the calling thread. Pass `INFINITY` for an infinite
//! risk level.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rasr::artifact::to_json;
use rasr::erm::{solve_finite, solve_infinite, solve_robust_infinite, ErmSolveReport};
use rasr::eval::simulate;
use rasr::evar::{solve_evar_with, EvarMode, EvarSolveReport};
use rasr::mdp::{builtin_chain, builtin_counterexample, load_ensemble, load_mdp};
use rasr::risk::{cvar, erm_weighted, evar_weighted, var, DiscreteDistribution};
use rasr::{ConfidenceLevel, ModelEnsemble, PolicyPlan, RasrError, RiskLevel, RolloutModel};

/// Result code of every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasrStatus {
    Ok = 0,
    NullPointer = 1,
    Validation = 2,
    Domain = 3,
    Parse = 4,
    Unsupported = 5,
    SizeGuard = 6,
    HorizonCap = 7,
    Io = 8,
    Internal = 9,
    Panic = 10,
    BufferTooSmall = 11,
}

/// Dynamics used by [`rasr_simulate`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasrRollout {
    Ensemble = 0,
    Mean = 1,
}

/// Posterior ensemble of transition models.
pub struct RasrEnsemble(ModelEnsemble);
/// Result of an ERM solve.
pub struct RasrErmReport(ErmSolveReport);
/// Result of an EVaR solve.
pub struct RasrEvarReport(EvarSolveReport);
/// Time-indexed deterministic policy.
pub struct RasrPlan(PolicyPlan);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &RasrError) -> RasrStatus {
    match err {
        RasrError::Validation(_) => RasrStatus::Validation,
        RasrError::Domain(_) => RasrStatus::Domain,
        RasrError::Parse { .. } => RasrStatus::Parse,
        RasrError::Unsupported(_) => RasrStatus::Unsupported,
        RasrError::SizeGuard(_) => RasrStatus::SizeGuard,
        RasrError::HorizonCap { .. } => RasrStatus::HorizonCap,
        RasrError::Io(_) => RasrStatus::Io,
        RasrError::Internal(_) => RasrStatus::Internal,
    }
}

struct Fail(RasrStatus, String);

impl From<RasrError> for Fail {
    fn from(e: RasrError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(name: &str) -> Fail {
    Fail(RasrStatus::NullPointer, format!("{name} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RasrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RasrStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RasrStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize, name: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(name))
}

fn level(alpha: f64) -> Result<RiskLevel, Fail> {
    Ok(RiskLevel::new(alpha)?)
}

fn distribution(outcomes: &[f64], probs: &[f64]) -> Result<DiscreteDistribution, Fail> {
    Ok(DiscreteDistribution::new(outcomes.to_vec(), probs.to_vec())?)
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

fn json_string(json: rasr::Result<String>) -> Result<*mut c_char, Fail> {
    let s = json?;
    Ok(CString::new(s).map_err(|e| Fail(RasrStatus::Internal, e.to_string()))?.into_raw())
}

/// Message of the last error on this thread, or null. Valid until the next
/// failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn rasr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by a `*_to_json` function.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rasr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// `ERM^alpha` of the distribution given by `outcomes` and `probabilities`.
///
/// # Safety
/// Both arrays must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rasr_erm(
    outcomes: *const f64,
    probabilities: *const f64,
    n: usize,
    alpha: f64,
    out_value: *mut f64,
) -> RasrStatus {
    guard(|| {
        let d = distribution(slice(outcomes, n, "outcomes")?, slice(probabilities, n, "probabilities")?)?;
        let a = level(alpha)?;
        *out(out_value, "out_value")? = erm_weighted(d.outcomes(), d.probabilities(), a);
        Ok(())
    })
}

/// `EVaR_beta` and its maximizing risk level (`INFINITY` when the minimum is attained).
///
/// # Safety
/// Both arrays must hold `n` doubles; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn rasr_evar(
    outcomes: *const f64,
    probabilities: *const f64,
    n: usize,
    beta: f64,
    out_value: *mut f64,
    out_alpha: *mut f64,
) -> RasrStatus {
    guard(|| {
        let d = distribution(slice(outcomes, n, "outcomes")?, slice(probabilities, n, "probabilities")?)?;
        let b = ConfidenceLevel::new(beta)?;
        let e = evar_weighted(d.outcomes(), d.probabilities(), b);
        *out(out_value, "out_value")? = e.value;
        if !out_alpha.is_null() {
            *out_alpha = e.alpha.value();
        }
        Ok(())
    })
}

/// `VaR_beta` of the distribution.
///
/// # Safety
/// Both arrays must hold `n` doubles; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rasr_var(
    outcomes: *const f64,
    probabilities: *const f64,
    n: usize,
    beta: f64,
    out_value: *mut f64,
) -> RasrStatus {
    guard(|| {
        let d = distribution(slice(outcomes, n, "outcomes")?, slice(probabilities, n, "probabilities")?)?;
        *out(out_value, "out_value")? = var(&d, ConfidenceLevel::new(beta)?);
        Ok(())
    })
}

/// `CVaR_beta` of the distribution.
///
/// # Safety
/// Both arrays must hold `n` doubles; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rasr_cvar(
    outcomes: *const f64,
    probabilities: *const f64,
    n: usize,
    beta: f64,
    out_value: *mut f64,
) -> RasrStatus {
    guard(|| {
        let d = distribution(slice(outcomes, n, "outcomes")?, slice(probabilities, n, "probabilities")?)?;
        *out(out_value, "out_value")? = cvar(&d, ConfidenceLevel::new(beta)?);
        Ok(())
    })
}

/// Loads a CSV model. With `is_ensemble` nonzero the file carries
/// `id_model,weight` columns; otherwise it is a single MDP. The initial state is 0.
///
/// # Safety
/// `path` must be a nul-terminated string; `out_ensemble` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rasr_ensemble_load(
    path: *const c_char,
    is_ensemble: i32,
    gamma: f64,
    out_ensemble: *mut *mut RasrEnsemble,
) -> RasrStatus {
    guard(|| {
        let out_ensemble = out(out_ensemble, "out_ensemble")?;
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail(RasrStatus::Validation, "path is not UTF-8".into()))?;
        let e = if is_ensemble != 0 {
            load_ensemble(path, gamma, 0)?
        } else {
            ModelEnsemble::point_mass(&load_mdp(path, gamma, 0)?)
        };
        *out_ensemble = boxed(RasrEnsemble(e));
        Ok(())
    })
}

/// The four-state counterexample as a single-model ensemble.
///
/// # Safety
/// `out_ensemble` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rasr_ensemble_counterexample(out_ensemble: *mut *mut RasrEnsemble) -> RasrStatus {
    guard(|| {
        *out(out_ensemble, "out_ensemble")? = boxed(RasrEnsemble(ModelEnsemble::point_mass(&builtin_counterexample())));
        Ok(())
    })
}

/// The chain domain with its perturbed posterior ensemble.
///
/// # Safety
/// `out_ensemble` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rasr_ensemble_chain(
    n: usize,
    slip: f64,
    n_models: usize,
    perturb: f64,
    seed: u64,
    out_ensemble: *mut *mut RasrEnsemble,
) -> RasrStatus {
    guard(|| {
        let out_ensemble = out(out_ensemble, "out_ensemble")?;
        *out_ensemble = boxed(RasrEnsemble(builtin_chain(n, slip, n_models, perturb, seed)?));
        Ok(())
    })
}

/// State, action and model counts.
///
/// # Safety
/// `ensemble` must be a live handle; null out pointers are skipped.
#[no_mangle]
pub unsafe extern "C" fn rasr_ensemble_dims(
    ensemble: *const RasrEnsemble,
    n_states: *mut usize,
    n_actions: *mut usize,
    n_models: *mut usize,
) -> RasrStatus {
    guard(|| {
        let e = &handle(ensemble, "ensemble")?.0;
        for (p, v) in [(n_states, e.n_states()), (n_actions, e.n_actions()), (n_models, e.n_models())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `ensemble` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rasr_ensemble_free(ensemble: *mut RasrEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

/// Finite-horizon ERM solve over `horizon` steps with zero terminal value.
///
/// # Safety
/// `ensemble` must be a live handle; `out_report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rasr_solve_erm_finite(
    ensemble: *const RasrEnsemble,
    alpha: f64,
    horizon: usize,
    out_report: *mut *mut RasrErmReport,
) -> RasrStatus {
    guard(|| {
        let e = &handle(ensemble, "ensemble")?.0;
        let out_report = out(out_report, "out_report")?;
        *out_report = boxed(RasrErmReport(solve_finite(e, level(alpha)?, horizon, None)?));
        Ok(())
    })
}

/// Infinite-horizon ERM solve to loss bound `tolerance`.
///
/// # Safety
/// `ensemble` must be a live handle; `out_report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rasr_solve_erm_infinite(
    ensemble: *const RasrEnsemble,
    alpha: f64,
    tolerance: f64,
    out_report: *mut *mut RasrErmReport,
) -> RasrStatus {
    guard(|| {
        let e = &handle(ensemble, "ensemble")?.0;
        let out_report = out(out_report, "out_report")?;
        let a = level(alpha)?;
        let rep = if a.is_infinite() { solve_robust_infinite(e, tolerance)? } else { solve_infinite(e, a, tolerance)? };
        *out_report = boxed(RasrErmReport(rep));
        Ok(())
    })
}

/// Objective `v_0(s0)` and loss bound (`NAN` when none applies).
///
/// # Safety
/// `report` must be a live handle; null out pointers are skipped.
#[no_mangle]
pub unsafe extern "C" fn rasr_erm_report_objective(
    report: *const RasrErmReport,
    out_objective: *mut f64,
    out_loss_bound: *mut f64,
) -> RasrStatus {
    guard(|| {
        let r = &handle(report, "report")?.0;
        if !out_objective.is_null() {
            *out_objective = r.objective;
        }
        if !out_loss_bound.is_null() {
            *out_loss_bound = r.loss_bound.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Copies the report's plan into a new handle.
///
/// # Safety
/// `report` must be a live handle; `out_plan` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rasr_erm_report_plan(report: *const RasrErmReport, out_plan: *mut *mut RasrPlan) -> RasrStatus {
    guard(|| {
        let r = &handle(report, "report")?.0;
        *out(out_plan, "out_plan")? = boxed(RasrPlan(r.plan.clone()));
        Ok(())
    })
}

/// Canonical JSON of the report; release with [`rasr_string_free`].
///
/// # Safety
/// `report` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rasr_erm_report_to_json(report: *const RasrErmReport, out_json: *mut *mut c_char) -> RasrStatus {
    guard(|| {
        let r = &handle(report, "report")?.0;
        *out(out_json, "out_json")? = json_string(to_json(r))?;
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rasr_erm_report_free(report: *mut RasrErmReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// EVaR solve with guarantee `delta`. `horizon` > 0 selects a finite-horizon
/// solve; 0 selects the infinite-horizon solve with `tolerance`.
///
/// # Safety
/// `ensemble` must be a live handle; `out_report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rasr_solve_evar(
    ensemble: *const RasrEnsemble,
    beta: f64,
    delta: f64,
    horizon: usize,
    tolerance: f64,
    out_report: *mut *mut RasrEvarReport,
) -> RasrStatus {
    guard(|| {
        let e = &handle(ensemble, "ensemble")?.0;
        let out_report = out(out_report, "out_report")?;
        let mode = if horizon > 0 { EvarMode::Finite { horizon } } else { EvarMode::Infinite { tolerance } };
        *out_report = boxed(RasrEvarReport(solve_evar_with(e, ConfidenceLevel::new(beta)?, delta, mode)?));
        Ok(())
    })
}

/// Objective `max_k h(alpha_k)` and the selected level.
///
/// # Safety
/// `report` must be a live handle; null out pointers are skipped.
#[no_mangle]
pub unsafe extern "C" fn rasr_evar_report_objective(
    report: *const RasrEvarReport,
    out_objective: *mut f64,
    out_best_alpha: *mut f64,
) -> RasrStatus {
    guard(|| {
        let r = &handle(report, "report")?.0;
        if !out_objective.is_null() {
            *out_objective = r.objective;
        }
        if !out_best_alpha.is_null() {
            *out_best_alpha = r.best_alpha.value();
        }
        Ok(())
    })
}

/// Copies the `(alpha_k, h(alpha_k))` curve; points whose inner solve was
/// skipped have `h = NAN`. `*out_len` always receives the curve length; with
/// `capacity` below it nothing is copied and `BufferTooSmall` is returned.
///
/// # Safety
/// `report` must be a live handle; the arrays must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn rasr_evar_report_h_curve(
    report: *const RasrEvarReport,
    alphas: *mut f64,
    h_values: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> RasrStatus {
    guard(|| {
        let r = &handle(report, "report")?.0;
        let n = r.h_values.len();
        *out(out_len, "out_len")? = n;
        if capacity < n {
            return Err(Fail(RasrStatus::BufferTooSmall, format!("curve has {n} points, capacity is {capacity}")));
        }
        if n > 0 && (alphas.is_null() || h_values.is_null()) {
            return Err(null("curve buffer"));
        }
        for (i, p) in r.h_values.iter().enumerate() {
            *alphas.add(i) = p.alpha.value();
            *h_values.add(i) = p.h.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Copies the report's plan into a new handle.
///
/// # Safety
/// `report` must be a live handle; `out_plan` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rasr_evar_report_plan(report: *const RasrEvarReport, out_plan: *mut *mut RasrPlan) -> RasrStatus {
    guard(|| {
        let r = &handle(report, "report")?.0;
        *out(out_plan, "out_plan")? = boxed(RasrPlan(r.plan.clone()));
        Ok(())
    })
}

/// Canonical JSON of the report; release with [`rasr_string_free`].
///
/// # Safety
/// `report` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rasr_evar_report_to_json(report: *const RasrEvarReport, out_json: *mut *mut c_char) -> RasrStatus {
    guard(|| {
        let r = &handle(report, "report")?.0;
        *out(out_json, "out_json")? = json_string(to_json(r))?;
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rasr_evar_report_free(report: *mut RasrEvarReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Action of the plan in `state` at step `t`.
///
/// # Safety
/// `plan` must be a live handle; `out_action` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rasr_plan_action(plan: *const RasrPlan, t: usize, state: usize, out_action: *mut usize) -> RasrStatus {
    guard(|| {
        let p = &handle(plan, "plan")?.0;
        let a = p
            .action(t, state)
            .ok_or_else(|| Fail(RasrStatus::Domain, format!("plan has no action for step {t}, state {state}")))?;
        *out(out_action, "out_action")? = a;
        Ok(())
    })
}

/// # Safety
/// `plan` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rasr_plan_free(plan: *mut RasrPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Simulates `episodes` episodes of `horizon` steps into `out_returns`.
///
/// # Safety
/// Handles must be live; `out_returns` must hold `episodes` doubles.
#[no_mangle]
pub unsafe extern "C" fn rasr_simulate(
    ensemble: *const RasrEnsemble,
    plan: *const RasrPlan,
    episodes: usize,
    horizon: usize,
    seed: u64,
    rollout: RasrRollout,
    out_returns: *mut f64,
) -> RasrStatus {
    guard(|| {
        let e = &handle(ensemble, "ensemble")?.0;
        let p = &handle(plan, "plan")?.0;
        if out_returns.is_null() {
            return Err(null("out_returns"));
        }
        let rollout = match rollout {
            RasrRollout::Ensemble => RolloutModel::Ensemble,
            RasrRollout::Mean => RolloutModel::Mean,
        };
        let sample = simulate(e, p, episodes, horizon, seed, rollout)?;
        std::slice::from_raw_parts_mut(out_returns, episodes).copy_from_slice(&sample.returns);
        Ok(())
    })
}
