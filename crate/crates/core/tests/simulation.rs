use rasr::erm::solve_finite;
use rasr::eval::{erm_standard_error, return_distribution};
use rasr::risk::erm;
use rasr::{risk_report, simulate, ConfidenceLevel, ModelEnsemble, PolicyPlan, RiskLevel, RolloutModel, Transitions};

fn two_state() -> ModelEnsemble {
    let a = Transitions::new(2, 2, vec![0.9, 0.1, 0.2, 0.8, 0.5, 0.5, 0.0, 1.0]).unwrap();
    let b = Transitions::new(2, 2, vec![0.6, 0.4, 0.7, 0.3, 0.1, 0.9, 0.3, 0.7]).unwrap();
    ModelEnsemble::new(vec![0.0, 1.0, 2.0, -1.5], vec![a, b], vec![0.3, 0.7], 0.95, 0).unwrap()
}

fn plan() -> PolicyPlan {
    PolicyPlan { rules: vec![vec![1, 0], vec![0, 1]], tail_rule: None }
}

#[test]
fn matches_exact_enumeration() {
    let e = two_state();
    let exact = return_distribution(&e, &plan(), 2).unwrap();
    for rollout in [RolloutModel::Ensemble, RolloutModel::Mean] {
        let s = simulate(&e, &plan(), 100_000, 2, 3, rollout).unwrap();
        let n = s.returns.len() as f64;
        let mean = s.returns.iter().sum::<f64>() / n;
        let sd = (s.returns.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((mean - exact.mean()).abs() < 3.0 * sd / n.sqrt(), "{rollout:?}: {mean} vs {}", exact.mean());

        let alpha = RiskLevel::Finite(1.0);
        let empirical = erm(&s.to_distribution().unwrap(), alpha);
        let se = erm_standard_error(&s.returns, alpha);
        assert!((empirical - erm(&exact, alpha)).abs() < 3.0 * se, "{rollout:?}: ERM {empirical}");
    }
}

#[test]
fn atoms_are_reachable_values() {
    let e = two_state();
    let exact = return_distribution(&e, &plan(), 2).unwrap();
    let s = simulate(&e, &plan(), 2_000, 2, 9, RolloutModel::Ensemble).unwrap();
    for x in &s.returns {
        assert!(exact.outcomes().iter().any(|y| (x - y).abs() < 1e-12), "unexpected return {x}");
    }
}

#[test]
fn seeds_are_reproducible_and_distinct() {
    let e = two_state();
    let p = solve_finite(&e, RiskLevel::Finite(0.5), 4, None).unwrap().plan;
    let a = simulate(&e, &p, 500, 4, 1, RolloutModel::Ensemble).unwrap();
    let b = simulate(&e, &p, 500, 4, 1, RolloutModel::Ensemble).unwrap();
    let c = simulate(&e, &p, 500, 4, 2, RolloutModel::Ensemble).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.returns, c.returns);
    // episode i does not depend on how many episodes were requested
    let short = simulate(&e, &p, 100, 4, 1, RolloutModel::Ensemble).unwrap();
    assert_eq!(&a.returns[..100], &short.returns[..]);
}

#[test]
fn report_from_simulation() {
    let e = two_state();
    let s = simulate(&e, &plan(), 50, 2, 0, RolloutModel::Ensemble).unwrap();
    let r = risk_report(&s, &[ConfidenceLevel::new(0.9).unwrap()]).unwrap();
    assert!(r.wide_confidence_warning);
    let l = &r.levels[0];
    assert!(l.evar <= l.cvar + 1e-9 && l.cvar <= l.var + 1e-9);
    assert!(s.to_csv().starts_with("episode,return\n"));
}

#[test]
fn rejects_uncovered_plans() {
    let e = two_state();
    assert!(simulate(&e, &plan(), 10, 3, 0, RolloutModel::Ensemble).is_err());
    assert!(simulate(&e, &plan(), 0, 2, 0, RolloutModel::Ensemble).is_err());
}
