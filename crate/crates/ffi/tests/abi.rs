use std::ffi::{CStr, CString};
use std::ptr;

use rasr_ffi::*;

fn last_error() -> String {
    let p = rasr_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn risk_measures_on_raw_arrays() {
    let xs = [0.0, 10.0];
    let ps = [0.5, 0.5];
    let mut v = 0.0;
    unsafe {
        assert_eq!(rasr_erm(xs.as_ptr(), ps.as_ptr(), 2, 1.0, &mut v), RasrStatus::Ok);
        assert!((v - 0.693_101_781_660_728_4).abs() < 1e-12);
        assert_eq!(rasr_erm(xs.as_ptr(), ps.as_ptr(), 2, f64::INFINITY, &mut v), RasrStatus::Ok);
        assert_eq!(v, 0.0);

        let u: Vec<f64> = (1..=10).map(f64::from).collect();
        let w = [0.1; 10];
        assert_eq!(rasr_var(u.as_ptr(), w.as_ptr(), 10, 0.9, &mut v), RasrStatus::Ok);
        assert_eq!(v, 2.0);
        assert_eq!(rasr_cvar(u.as_ptr(), w.as_ptr(), 10, 0.9, &mut v), RasrStatus::Ok);
        assert!((v - 1.0).abs() < 1e-12);
        let mut a = 0.0;
        assert_eq!(rasr_evar(u.as_ptr(), w.as_ptr(), 10, 0.5, &mut v, &mut a), RasrStatus::Ok);
        assert!((v - 2.370_299_019_191_068).abs() < 1e-8);
        assert!(a > 0.0 && a.is_finite());
    }
}

#[test]
fn errors_set_status_and_message() {
    let xs = [0.0, 1.0];
    let bad = [0.5, 0.6];
    let mut v = 0.0;
    unsafe {
        assert_eq!(rasr_erm(xs.as_ptr(), bad.as_ptr(), 2, 1.0, &mut v), RasrStatus::Validation);
        assert!(last_error().contains("sum"));
        let ok = [0.5, 0.5];
        assert_eq!(rasr_erm(xs.as_ptr(), ok.as_ptr(), 2, -1.0, &mut v), RasrStatus::Domain);
        assert_eq!(rasr_var(xs.as_ptr(), ok.as_ptr(), 2, 1.0, &mut v), RasrStatus::Domain);
        assert_eq!(rasr_erm(ptr::null(), ok.as_ptr(), 2, 1.0, &mut v), RasrStatus::NullPointer);
        assert_eq!(rasr_erm(xs.as_ptr(), ok.as_ptr(), 2, 1.0, ptr::null_mut()), RasrStatus::NullPointer);

        let mut e = ptr::null_mut();
        assert_eq!(rasr_ensemble_chain(1, 0.1, 2, 0.0, 0, &mut e), RasrStatus::Domain);
        assert!(e.is_null());
        let path = CString::new("/nonexistent/model.csv").unwrap();
        assert_eq!(rasr_ensemble_load(path.as_ptr(), 0, 0.9, &mut e), RasrStatus::Io);
    }
}

#[test]
fn counterexample_evar_curve() {
    unsafe {
        let mut e = ptr::null_mut();
        assert_eq!(rasr_ensemble_counterexample(&mut e), RasrStatus::Ok);
        let (mut s, mut a, mut m) = (0, 0, 0);
        assert_eq!(rasr_ensemble_dims(e, &mut s, &mut a, &mut m), RasrStatus::Ok);
        assert_eq!((s, a, m), (4, 2, 1));

        let mut r = ptr::null_mut();
        assert_eq!(rasr_solve_evar(e, 0.5, 0.05, 2, 0.0, &mut r), RasrStatus::Ok);
        let mut len = 0;
        assert_eq!(
            rasr_evar_report_h_curve(r, ptr::null_mut(), ptr::null_mut(), 0, &mut len),
            RasrStatus::BufferTooSmall
        );
        let mut alphas = vec![0.0; len];
        let mut hs = vec![0.0; len];
        assert_eq!(rasr_evar_report_h_curve(r, alphas.as_mut_ptr(), hs.as_mut_ptr(), len, &mut len), RasrStatus::Ok);
        assert!(alphas[0].is_infinite());
        let (mut obj, mut best) = (0.0, 0.0);
        assert_eq!(rasr_evar_report_objective(r, &mut obj, &mut best), RasrStatus::Ok);
        assert_eq!(obj, hs.iter().copied().filter(|h| !h.is_nan()).fold(f64::NEG_INFINITY, f64::max));

        let mut json = ptr::null_mut();
        assert_eq!(rasr_evar_report_to_json(r, &mut json), RasrStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        rasr_string_free(json);
        assert!(text.contains("\"h_values\""));

        let mut plan = ptr::null_mut();
        assert_eq!(rasr_evar_report_plan(r, &mut plan), RasrStatus::Ok);
        let mut act = 9;
        assert_eq!(rasr_plan_action(plan, 0, 0, &mut act), RasrStatus::Ok);
        assert!(act < 2);
        assert_eq!(rasr_plan_action(plan, 5, 0, &mut act), RasrStatus::Domain);
        rasr_plan_free(plan);
        rasr_evar_report_free(r);
        rasr_ensemble_free(e);
    }
}

#[test]
fn erm_solve_and_simulate() {
    unsafe {
        let mut e = ptr::null_mut();
        assert_eq!(rasr_ensemble_chain(5, 0.06, 4, 0.05, 7, &mut e), RasrStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(rasr_solve_erm_infinite(e, 0.5, 1e-3, &mut r), RasrStatus::Ok);
        let (mut obj, mut bound) = (0.0, 0.0);
        assert_eq!(rasr_erm_report_objective(r, &mut obj, &mut bound), RasrStatus::Ok);
        assert!(bound <= 1e-3 && obj.is_finite());

        let mut plan = ptr::null_mut();
        assert_eq!(rasr_erm_report_plan(r, &mut plan), RasrStatus::Ok);
        let mut a = vec![0.0; 500];
        let mut b = vec![0.0; 500];
        assert_eq!(rasr_simulate(e, plan, 500, 50, 3, RasrRollout::Ensemble, a.as_mut_ptr()), RasrStatus::Ok);
        assert_eq!(rasr_simulate(e, plan, 500, 50, 3, RasrRollout::Ensemble, b.as_mut_ptr()), RasrStatus::Ok);
        assert_eq!(a, b);
        assert_eq!(rasr_simulate(e, plan, 500, 0, 3, RasrRollout::Mean, a.as_mut_ptr()), RasrStatus::Domain);

        let mut robust = ptr::null_mut();
        assert_eq!(rasr_solve_erm_infinite(e, f64::INFINITY, 1e-6, &mut robust), RasrStatus::Ok);
        let mut finite = ptr::null_mut();
        assert_eq!(rasr_solve_erm_finite(e, 1.0, 10, &mut finite), RasrStatus::Ok);
        let mut json = ptr::null_mut();
        assert_eq!(rasr_erm_report_to_json(finite, &mut json), RasrStatus::Ok);
        rasr_string_free(json);

        rasr_erm_report_free(finite);
        rasr_erm_report_free(robust);
        rasr_plan_free(plan);
        rasr_erm_report_free(r);
        rasr_ensemble_free(e);
        // null frees are no-ops
        rasr_ensemble_free(ptr::null_mut());
        rasr_string_free(ptr::null_mut());
    }
}

#[test]
fn load_from_csv() {
    let dir = std::env::temp_dir().join(format!("rasr-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("two.csv");
    std::fs::write(
        &path,
        "id_state,id_action,id_next_state,probability,reward\n0,0,0,1,1\n1,0,1,1,0\n",
    )
    .unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut e = ptr::null_mut();
        assert_eq!(rasr_ensemble_load(c.as_ptr(), 0, 0.5, &mut e), RasrStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(rasr_solve_erm_finite(e, 0.0, 3, &mut r), RasrStatus::Ok);
        let mut obj = 0.0;
        assert_eq!(rasr_erm_report_objective(r, &mut obj, ptr::null_mut()), RasrStatus::Ok);
        assert_eq!(obj, 1.75);
        rasr_erm_report_free(r);
        rasr_ensemble_free(e);
    }
    std::fs::remove_dir_all(dir).unwrap();
}
