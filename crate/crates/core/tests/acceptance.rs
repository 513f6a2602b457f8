//! Acceptance suite: one PASS/FAIL line per criterion.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::ThreadPoolBuilder;

use rasr::artifact::to_json;
use rasr::erm::{loss_constant, required_horizon, solve_finite, solve_infinite, solve_infinite_with, InfiniteOptions};
use rasr::eval::{
    brute_force_oracle, naive_baseline, return_distribution, risk_report, simulate, simulate_tagged, RolloutModel,
};
use rasr::evar::{h_of_alpha, solve_evar, solve_evar_with, EvarMode};
use rasr::mdp::{builtin_counterexample, ChainParams, COUNTEREXAMPLE_BETA, COUNTEREXAMPLE_HORIZON};
use rasr::risk::{cvar, erm, evar, hoeffding_gap, var};
use rasr::{ConfidenceLevel, DiscreteDistribution, ModelEnsemble, PolicyPlan, RiskLevel, Transitions};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn simplex(r: &mut ChaCha8Rng, n: usize, sparse: bool) -> Vec<f64> {
    loop {
        let mut w: Vec<f64> = (0..n)
            .map(|_| if sparse && r.random::<f64>() < 0.4 { 0.0 } else { -(1.0 - r.random::<f64>()).ln() })
            .collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            w.iter_mut().for_each(|x| *x /= total);
            return w;
        }
    }
}

fn random_dist(r: &mut ChaCha8Rng, max_atoms: usize) -> DiscreteDistribution {
    let n = r.random_range(1..=max_atoms);
    let xs: Vec<f64> = (0..n).map(|_| r.random_range(-10.0..10.0)).collect();
    let ps = simplex(r, n, n > 1);
    let total: f64 = ps.iter().sum();
    DiscreteDistribution::new(xs, ps.iter().map(|p| p / total).collect()).unwrap()
}

fn random_ensemble(r: &mut ChaCha8Rng, max_s: usize, max_a: usize, max_m: usize, gamma: f64) -> ModelEnsemble {
    let s = r.random_range(1..=max_s);
    let a = r.random_range(1..=max_a);
    let m = r.random_range(1..=max_m);
    let models = (0..m)
        .map(|_| {
            let probs: Vec<f64> = (0..s * a).flat_map(|_| simplex(r, s, true)).collect();
            Transitions::new(s, a, probs).unwrap()
        })
        .collect();
    let reward = (0..s * a).map(|_| r.random_range(-1.0..1.0)).collect();
    let weights = simplex(r, m, false);
    ModelEnsemble::new(reward, models, weights, gamma, 0).unwrap()
}

// ---------------------------------------------------------------------------

fn criterion_1() -> Outcome {
    const TOL: f64 = 1e-9;
    let mut r = rng(1);
    let alphas = [RiskLevel::Neutral, RiskLevel::Finite(0.05), RiskLevel::Finite(0.7), RiskLevel::Finite(3.0), RiskLevel::Infinite];
    let betas = [0.1, 0.5, 0.9, 0.99];
    let mut var_above_mean = 0;
    for i in 0..1000 {
        let d = random_dist(&mut r, 20);
        let mean = d.mean();
        // translation equivariance and positive quasi-homogeneity
        let c = r.random_range(-5.0..5.0);
        let k = r.random_range(0.1..3.0);
        for &a in &alphas {
            let base = erm(&d, a);
            ensure!((erm(&d.shift(c), a) - (base + c)).abs() <= TOL, "dist {i}: translation at {a}");
            let lhs = erm(&d.scale(k), a);
            let rhs = k * erm(&d, a.scaled(k));
            ensure!((lhs - rhs).abs() <= TOL, "dist {i}: quasi-homogeneity at {a}: {lhs} vs {rhs}");
            // Hoeffding sandwich
            ensure!(base <= mean + TOL, "dist {i}: ERM above mean at {a}");
            if !a.is_infinite() {
                let gap = hoeffding_gap(a, d.span()).map_err(|x| x.to_string())?;
                ensure!(base >= mean - gap - TOL, "dist {i}: ERM below Hoeffding bound at {a}");
            }
        }
        // monotone in alpha
        for w in alphas.windows(2) {
            ensure!(erm(&d, w[0]) >= erm(&d, w[1]) - TOL, "dist {i}: not monotone between {} and {}", w[0], w[1]);
        }
        // ordering
        for &b in &betas {
            let beta = ConfidenceLevel::new(b).unwrap();
            let (e, cv, v) = (evar(&d, beta).value, cvar(&d, beta), var(&d, beta));
            ensure!(e <= cv + TOL && cv <= v + TOL, "dist {i}, beta {b}: evar {e} cvar {cv} var {v}");
            ensure!(e <= mean + TOL && cv <= mean + TOL, "dist {i}, beta {b}: above mean");
            ensure!(e >= d.min_supported() - TOL, "dist {i}, beta {b}: evar below ess inf");
            if v > mean + TOL {
                var_above_mean += 1;
            }
        }
    }
    // tower property on two-stage constructions
    for i in 0..1000 {
        let branches = r.random_range(1..=4);
        let q = simplex(&mut r, branches, false);
        let stage: Vec<DiscreteDistribution> = (0..branches).map(|_| random_dist(&mut r, 5)).collect();
        let (mut xs, mut ps) = (Vec::new(), Vec::new());
        for (qi, di) in q.iter().zip(&stage) {
            for (x, p) in di.outcomes().iter().zip(di.probabilities()) {
                xs.push(*x);
                ps.push(qi * p);
            }
        }
        let total: f64 = ps.iter().sum();
        let joint = DiscreteDistribution::new(xs, ps.iter().map(|p| p / total).collect()).unwrap();
        for &a in &alphas {
            let inner: Vec<f64> = stage.iter().map(|di| erm(di, a)).collect();
            let outer = erm(&DiscreteDistribution::new(inner, q.clone()).unwrap(), a);
            ensure!((erm(&joint, a) - outer).abs() <= TOL, "construction {i}: tower property at {a}");
        }
    }
    Ok(format!(
        "1000 distributions x 5 levels, 1000 two-stage constructions; VaR exceeded the mean on {var_above_mean} \
         (dist, beta) pairs, which the ordering EVaR <= CVaR <= VaR does not forbid"
    ))
}

fn criterion_2() -> Outcome {
    let mut r = rng(2);
    let alphas = [RiskLevel::Neutral, RiskLevel::Finite(0.5), RiskLevel::Finite(2.0), RiskLevel::Infinite];
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let gamma = [0.5, 0.9, 1.0][r.random_range(0..3)];
        let e = random_ensemble(&mut r, 3, 2, 3, gamma);
        let horizon = r.random_range(1..=3);
        let mean = ModelEnsemble::point_mass(&e.mean_mdp());
        for &a in &alphas {
            let solved = solve_finite(&e, a, horizon, None).map_err(|x| x.to_string())?;
            let oracle = brute_force_oracle(&e, a, horizon).map_err(|x| x.to_string())?;
            let diff = (solved.objective - oracle.objective).abs();
            worst = worst.max(diff);
            ensure!(diff <= 1e-9, "instance {i} at {a}: solver {} oracle {}", solved.objective, oracle.objective);
            // the solver's plan attains the optimum on its exact return distribution
            let attained = erm(&return_distribution(&e, &solved.plan, horizon).unwrap(), a);
            ensure!((attained - oracle.objective).abs() <= 1e-9, "instance {i} at {a}: plan attains {attained}");
            // ensemble solve and mean-model solve coincide exactly
            let via_mean = solve_finite(&mean, a, horizon, None).map_err(|x| x.to_string())?;
            ensure!(via_mean.plan == solved.plan, "instance {i} at {a}: mean-model plan differs");
            let bits = |v: &[Vec<f64>]| -> Vec<u64> { v.iter().flatten().map(|x| x.to_bits()).collect() };
            ensure!(
                bits(&via_mean.values.values) == bits(&solved.values.values),
                "instance {i} at {a}: mean-model values differ"
            );
        }
    }
    Ok(format!("200 instances x 4 levels, max |solver - oracle| = {worst:.2e}; mean-model solves bit-identical"))
}

fn criterion_3() -> Outcome {
    let mut r = rng(3);
    let gamma: f64 = 0.9;
    let alpha = RiskLevel::Finite(1.0);
    let tolerance = 1e-6;
    let mut max_ratio: f64 = 0.0;
    let mut max_ratio_late: f64 = 0.0;
    let mut i = 0;
    while i < 20 {
        let e = random_ensemble(&mut r, 6, 3, 3, gamma);
        let span = e.reward_span();
        if span == 0.0 {
            continue;
        }
        let t = required_horizon(alpha, span, gamma, tolerance) as usize;
        let c = loss_constant(alpha, span, gamma);
        let bound = c * gamma.powi(2 * t as i32);
        // the tail solve is run far tighter than the bound so only truncation shows
        let solve = |h: usize| {
            solve_infinite_with(&e, alpha, &InfiniteOptions::new(1e-13).with_horizon(h))
                .map(|x| x.objective)
                .map_err(|x| x.to_string())
        };
        let reference = solve(4 * t)?;
        let gap = (solve(t)? - reference).abs();
        let late = (solve(t + 10)? - reference).abs();
        ensure!(gap <= bound, "instance {i}: gap {gap:.3e} exceeds bound {bound:.3e} at T'={t}");
        ensure!(late <= gamma.powi(20) * bound, "instance {i}: gap at T'+10 {late:.3e} exceeds gamma^20 x {bound:.3e}");
        if bound > 0.0 {
            max_ratio = max_ratio.max(gap / bound);
            max_ratio_late = max_ratio_late.max(late / (gamma.powi(20) * bound));
        }
        i += 1;
    }
    Ok(format!(
        "20 instances, max gap/bound at T' = {max_ratio:.3}, max gap/(gamma^20 bound) at T'+10 = {max_ratio_late:.3}"
    ))
}

/// Largest EVaR over every Markov deterministic plan, by enumeration.
fn exact_optimal_evar(e: &ModelEnsemble, beta: ConfidenceLevel, horizon: usize) -> f64 {
    let (n_s, n_a) = (e.n_states(), e.n_actions());
    let slots = n_s * horizon;
    let mut digits = vec![0usize; slots];
    let mut best = f64::NEG_INFINITY;
    loop {
        let plan = PolicyPlan { rules: digits.chunks(n_s).map(<[usize]>::to_vec).collect(), tail_rule: None };
        best = best.max(evar(&return_distribution(e, &plan, horizon).unwrap(), beta).value);
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
            return best;
        }
    }
}

/// Lower bound on the optimal EVaR from a dense log-spaced set of levels.
fn dense_optimal_evar(e: &ModelEnsemble, beta: ConfidenceLevel, horizon: usize) -> f64 {
    let mut best = brute_force_oracle(e, RiskLevel::Infinite, horizon).unwrap().objective;
    for j in 0..=120 {
        let a = 10f64.powf(-3.0 + 7.0 * j as f64 / 120.0);
        let level = RiskLevel::Finite(a);
        let h = brute_force_oracle(e, level, horizon).unwrap().objective + level.evar_penalty(beta);
        best = best.max(h);
    }
    best
}

fn criterion_4() -> Outcome {
    let mut r = rng(2);
    let delta = 0.05;
    let mut worst_shortfall = f64::NEG_INFINITY;
    let mut worst_spacing: f64 = 0.0;
    for i in 0..200 {
        let gamma = [0.5, 0.9, 1.0][r.random_range(0..3)];
        let e = random_ensemble(&mut r, 3, 2, 3, gamma);
        let horizon = r.random_range(1..=3);
        let beta = ConfidenceLevel::new([0.3, 0.6, 0.9][i % 3]).unwrap();
        let rep = solve_evar_with(&e, beta, delta, EvarMode::Finite { horizon }).map_err(|x| x.to_string())?;
        let optimum = exact_optimal_evar(&e, beta, horizon);
        let attained = evar(&return_distribution(&e, &rep.plan, horizon).unwrap(), beta).value;
        let shortfall = optimum - attained;
        worst_shortfall = worst_shortfall.max(shortfall);
        ensure!(shortfall <= delta + 1e-6, "instance {i}: plan EVaR {attained} vs optimum {optimum}");
        ensure!(rep.objective <= optimum + 1e-6, "instance {i}: objective {} above optimum {optimum}", rep.objective);
        ensure!(rep.objective <= attained + 1e-9, "instance {i}: objective {} above plan EVaR {attained}", rep.objective);
        if i % 20 == 0 {
            let dense = dense_optimal_evar(&e, beta, horizon);
            ensure!(dense <= optimum + 1e-6, "instance {i}: dense search {dense} above enumeration {optimum}");
            ensure!(dense >= optimum - 1e-2, "instance {i}: dense search {dense} far below enumeration {optimum}");
        }
        let levels: Vec<f64> = rep.h_values.iter().map(|p| p.alpha.value()).collect();
        ensure!(levels[0].is_infinite(), "instance {i}: grid does not start at infinity");
        for w in levels[1..].windows(2) {
            let spacing = beta.log_tail() * (1.0 / w[0] - 1.0 / w[1]);
            worst_spacing = worst_spacing.max((spacing - delta).abs());
            ensure!((spacing - delta).abs() <= 1e-9, "instance {i}: spacing {spacing}");
        }
    }
    Ok(format!(
        "200 instances, delta = {delta}: max shortfall vs exact optimum = {worst_shortfall:.3e}, \
         max spacing error = {worst_spacing:.1e}"
    ))
}

fn criterion_5() -> Outcome {
    let e = ModelEnsemble::point_mass(&builtin_counterexample());
    let beta = ConfidenceLevel::new(COUNTEREXAMPLE_BETA).unwrap();
    let mode = EvarMode::Finite { horizon: COUNTEREXAMPLE_HORIZON };
    let h = |a: f64| h_of_alpha(&e, RiskLevel::Finite(a), beta, mode).map_err(|x| x.to_string());
    let (h1, h2, h4) = (h(1.0)?, h(2.0)?, h(4.0)?);
    ensure!(h2 < h1.min(h4), "h(1)={h1} h(2)={h2} h(4)={h4}");
    let expected = [(h1, -0.0164695775315983), (h2, -0.3465735902799727), (h4, -0.1732867951399863)];
    for (got, want) in expected {
        ensure!((got - want).abs() <= 1e-12, "h = {got}, reference {want}");
    }
    Ok(format!("h(1) = {h1:.12}, h(2) = {h2:.12}, h(4) = {h4:.12}"))
}

fn criterion_6() -> Outcome {
    let e = ChainParams::default().build().map_err(|x| x.to_string())?;
    let beta = ConfidenceLevel::new(0.9).unwrap();
    let tolerance = 1e-4;
    let rasr_plan = solve_evar(&e, beta, 0.05, tolerance).map_err(|x| x.to_string())?;
    let neutral = solve_infinite(&e, RiskLevel::Neutral, tolerance).map_err(|x| x.to_string())?;
    let naive = naive_baseline(&e, rasr_plan.best_alpha, tolerance).map_err(|x| x.to_string())?;
    let (episodes, horizon) = (100_000, 200);
    let run = |plan: &PolicyPlan, seed: u64, tag: &str| {
        let s = simulate_tagged(&e, plan, episodes, horizon, seed, RolloutModel::Ensemble, tag).unwrap();
        risk_report(&s, &[beta]).unwrap().levels[0].clone()
    };
    let a = run(&rasr_plan.plan, 11, "rasr");
    let b = run(&neutral.plan, 12, "neutral");
    let c = run(&naive.plan, 13, "naive");
    let margin = |o: &rasr::eval::LevelRisk| {
        let se = (a.evar_std_error.powi(2) + o.evar_std_error.powi(2)).sqrt();
        ((a.evar - o.evar) / se, se)
    };
    let (z_neutral, se_neutral) = margin(&b);
    let (z_naive, se_naive) = margin(&c);
    let detail = format!(
        "EVaR^0.9: rasr {:.4}, risk-neutral {:.4} ({z_neutral:.1} SE, SE {se_neutral:.4}), naive alpha*={} {:.4} \
         ({z_naive:.1} SE, SE {se_naive:.4})",
        a.evar, b.evar, rasr_plan.best_alpha, c.evar
    );
    ensure!(z_neutral > 3.0 && z_naive > 3.0, "{detail}");
    Ok(detail)
}

fn artifacts() -> Vec<String> {
    let e = ChainParams::default().build().unwrap();
    let small = random_ensemble(&mut rng(7), 3, 2, 3, 0.9);
    let wide = ChainParams { n: 300, ..ChainParams::default() }.build().unwrap();
    let beta = ConfidenceLevel::new(0.9).unwrap();
    let evar_inf = solve_evar(&e, beta, 0.05, 1e-3).unwrap();
    let sample = simulate(&e, &evar_inf.plan, 20_000, 100, 5, RolloutModel::Ensemble).unwrap();
    let mean_sample = simulate(&e, &evar_inf.plan, 5_000, 100, 5, RolloutModel::Mean).unwrap();
    vec![
        to_json(&solve_finite(&small, RiskLevel::Finite(2.0), 3, None).unwrap()).unwrap(),
        to_json(&solve_infinite(&e, RiskLevel::Finite(1.0), 1e-4).unwrap()).unwrap(),
        to_json(&solve_infinite(&wide, RiskLevel::Finite(1.0), 1e-3).unwrap()).unwrap(),
        to_json(&evar_inf).unwrap(),
        to_json(&solve_evar_with(&small, beta, 0.05, EvarMode::Finite { horizon: 3 }).unwrap()).unwrap(),
        to_json(&naive_baseline(&e, RiskLevel::Finite(2.0), 1e-4).unwrap()).unwrap(),
        to_json(&sample).unwrap(),
        to_json(&mean_sample).unwrap(),
        to_json(&risk_report(&sample, &[beta, ConfidenceLevel::new(0.5).unwrap()]).unwrap()).unwrap(),
    ]
}

fn criterion_7() -> Outcome {
    let first = artifacts();
    let second = artifacts();
    ensure!(first == second, "two runs differ");
    let in_pool = |n: usize| ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(artifacts);
    let one = in_pool(1);
    let many = in_pool(4);
    for (i, ((a, b), c)) in first.iter().zip(&one).zip(&many).enumerate() {
        ensure!(a == b, "artifact {i}: default pool differs from 1 thread");
        ensure!(b == c, "artifact {i}: 1 thread differs from 4 threads");
    }
    let bytes: usize = first.iter().map(String::len).sum();
    Ok(format!("{} artifacts ({bytes} bytes) identical across 2 runs and 1/4/default threads", first.len()))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("1 risk-kernel axioms", criterion_1, Duration::from_secs(10)),
        ("2 oracle equivalence", criterion_2, Duration::from_secs(60)),
        ("3 horizon loss bound", criterion_3, Duration::from_secs(120)),
        ("4 EVaR grid guarantee", criterion_4, Duration::from_secs(600)),
        ("5 non-quasi-concave h", criterion_5, Duration::from_secs(1)),
        ("6 chain replication", criterion_6, Duration::from_secs(300)),
        ("7 determinism", criterion_7, Duration::from_secs(600)),
    ];
    let mut failures = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > budget => Err(format!("{detail}; took {took:.1?}, budget {budget:.0?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{:.2}s]", took.as_secs_f64()),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {name}: {detail} [{:.2}s]", took.as_secs_f64());
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
