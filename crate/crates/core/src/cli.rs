//! The `rasr` command-line tool.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::artifact::{fmt_f64, write_json};
use crate::erm::{solve_finite, solve_infinite, solve_robust_infinite, ErmSolveReport};
use crate::error::{validation, RasrError, Result};
use crate::eval::{risk_report, simulate_tagged, ReturnSample, RiskReport, RolloutModel};
use crate::evar::{solve_evar_with, EvarMode, EvarSolveReport};
use crate::mdp::{
    builtin_counterexample, load_ensemble, load_mdp, ChainParams, ModelEnsemble, PolicyPlan, COUNTEREXAMPLE_HORIZON,
};
use crate::risk::{ConfidenceLevel, RiskLevel};

/// Discount used for CSV inputs when `--gamma` is absent.
pub const DEFAULT_FILE_GAMMA: f64 = 0.9;
/// Simulation length when the discount is below one and `--horizon` is absent.
pub const DEFAULT_SIM_HORIZON: usize = 200;

#[derive(Debug, Parser)]
#[command(name = "rasr", version, about = "Risk-averse planning under a posterior ensemble of MDP models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Maximize ERM^alpha of the return with the decaying alpha*gamma^t schedule.
    SolveErm(SolveErmArgs),
    /// Maximize EVaR_beta of the return over a grid of ERM problems; emits the h(alpha) curve.
    SolveEvar(SolveEvarArgs),
    /// Simulate a plan and report VaR/CVaR/EVaR of the realized returns.
    Evaluate(EvaluateArgs),
    /// Risk report for returns stored in a file.
    Report(ReportArgs),
    /// Chain domain end to end: EVaR plan at beta=0.9, simulation, risk report.
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Single-model CSV (id_state,id_action,id_next_state,probability,reward) or a builtin name:
    /// `counterexample`, `chain` [default: chain, when --ensemble is also absent]
    #[arg(long, value_name = "PATH", conflicts_with = "ensemble")]
    pub mdp: Option<String>,
    /// Ensemble CSV (id_model,weight,id_state,...) or a builtin name [default: none]
    #[arg(long, value_name = "PATH")]
    pub ensemble: Option<String>,
    /// Discount factor in (0, 1] [default: the builtin's own; 0.9 for CSV input]
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Directory receiving the artifacts
    #[arg(long, value_name = "DIR", default_value = "rasr-out")]
    pub out: PathBuf,
    /// Artifact format; JSON is canonical, CSV is a tabular projection
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct SolveErmArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Initial risk level: a nonnegative number or `inf`
    #[arg(long, default_value = "1", value_parser = parse_risk_level, allow_hyphen_values = true)]
    pub alpha: RiskLevel,
    /// Finite-horizon solve over N steps [default: infinite horizon; 2 for the counterexample]
    #[arg(long, value_name = "N")]
    pub horizon: Option<usize>,
    /// Target loss bound for the infinite-horizon solve
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SolveEvarArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// EVaR confidence level in [0, 1)
    #[arg(long, default_value = "0.9", value_parser = parse_confidence)]
    pub beta: ConfidenceLevel,
    /// Suboptimality guarantee; sets the grid spacing
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Finite-horizon solve over N steps [default: infinite horizon; 2 for the counterexample]
    #[arg(long, value_name = "N")]
    pub horizon: Option<usize>,
    /// Loss-bound tolerance of each inner infinite-horizon ERM solve
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulationArgs {
    /// Number of simulated episodes
    #[arg(long, default_value_t = 10_000)]
    pub episodes: usize,
    /// Steps per episode [default: 2 for the counterexample, otherwise 200]
    #[arg(long, value_name = "N")]
    pub horizon: Option<usize>,
    /// Master seed; episode i uses substream i
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dynamics used for rollouts
    #[arg(long, value_enum, default_value_t = RolloutModel::Ensemble)]
    pub rollout_model: RolloutModel,
    /// Comma-separated confidence levels for the report
    #[arg(long, default_value = "0.5,0.9,0.95,0.99", value_delimiter = ',', value_parser = parse_confidence)]
    pub levels: Vec<ConfidenceLevel>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Plan to evaluate: a JSON plan or any solve report holding one
    /// [default: solve EVaR with --beta and --delta first]
    #[arg(long, value_name = "PATH")]
    pub plan: Option<PathBuf>,
    /// EVaR confidence level used when no plan is given
    #[arg(long, default_value = "0.9", value_parser = parse_confidence)]
    pub beta: ConfidenceLevel,
    /// Grid guarantee used when no plan is given
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Tolerance of the solve used when no plan is given
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[command(flatten)]
    pub sim: SimulationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Returns file: JSON sample, or CSV with a `return` column or a single column
    #[arg(long, value_name = "PATH")]
    pub returns: PathBuf,
    /// Comma-separated confidence levels
    #[arg(long, default_value = "0.5,0.9,0.95,0.99", value_delimiter = ',', value_parser = parse_confidence)]
    pub levels: Vec<ConfidenceLevel>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DemoArgs {
    /// Number of simulated episodes
    #[arg(long, default_value_t = 10_000)]
    pub episodes: usize,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn parse_risk_level(s: &str) -> std::result::Result<RiskLevel, String> {
    s.parse().map_err(|e: RasrError| e.to_string())
}

fn parse_confidence(s: &str) -> std::result::Result<ConfidenceLevel, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("cannot parse confidence level {s:?}"))?;
    ConfidenceLevel::new(v).map_err(|e| e.to_string())
}

/// Loaded problem plus the defaults that depend on where it came from.
struct Problem {
    ensemble: ModelEnsemble,
    name: String,
    default_horizon: Option<usize>,
}

fn load_problem(args: &ModelArgs) -> Result<Problem> {
    let (source, as_ensemble) = match (&args.mdp, &args.ensemble) {
        (Some(p), None) => (p.as_str(), false),
        (None, Some(p)) => (p.as_str(), true),
        (None, None) => ("chain", true),
        (Some(_), Some(_)) => return Err(validation("give at most one of --mdp and --ensemble")),
    };
    let (ensemble, default_horizon) = match source {
        "counterexample" => (ModelEnsemble::point_mass(&builtin_counterexample()), Some(COUNTEREXAMPLE_HORIZON)),
        "chain" => (ChainParams::default().build()?, None),
        path => {
            let gamma = args.gamma.unwrap_or(DEFAULT_FILE_GAMMA);
            let e = if as_ensemble {
                load_ensemble(path, gamma, 0)?
            } else {
                ModelEnsemble::point_mass(&load_mdp(path, gamma, 0)?)
            };
            (e, None)
        }
    };
    let ensemble = match args.gamma {
        Some(g) => ensemble.with_discount(g)?,
        None => ensemble,
    };
    Ok(Problem { ensemble, name: source.to_owned(), default_horizon })
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

fn plan_csv(plan: &PolicyPlan, values: Option<&[Vec<f64>]>) -> String {
    let mut s = String::from("step,state,action,value\n");
    for (t, rule) in plan.rules.iter().enumerate() {
        for (state, a) in rule.iter().enumerate() {
            let v = values.and_then(|v| v.get(t)).map(|v| fmt_f64(v[state])).unwrap_or_default();
            s.push_str(&format!("{t},{state},{a},{v}\n"));
        }
    }
    if let Some(rule) = &plan.tail_rule {
        for (state, a) in rule.iter().enumerate() {
            s.push_str(&format!("tail,{state},{a},\n"));
        }
    }
    s
}

fn h_curve_csv(report: &EvarSolveReport) -> String {
    let mut s = String::from("k,alpha,h,valid\n");
    for (k, p) in report.h_values.iter().enumerate() {
        let h = p.h.map(fmt_f64).unwrap_or_default();
        s.push_str(&format!("{k},{},{h},{}\n", p.alpha, p.valid));
    }
    s
}

fn write_erm(out: &OutputArgs, report: &ErmSolveReport) -> Result<()> {
    prepare_out(&out.out)?;
    match out.format {
        Format::Json => write_json(&out.out.join("erm_report.json"), report),
        Format::Csv => Ok(fs::write(out.out.join("policy.csv"), plan_csv(&report.plan, Some(&report.values.values)))?),
    }
}

fn write_evar(out: &OutputArgs, report: &EvarSolveReport) -> Result<()> {
    prepare_out(&out.out)?;
    match out.format {
        Format::Json => write_json(&out.out.join("evar_report.json"), report),
        Format::Csv => {
            fs::write(out.out.join("policy.csv"), plan_csv(&report.plan, None))?;
            Ok(fs::write(out.out.join("h_curve.csv"), h_curve_csv(report))?)
        }
    }
}

fn write_sample(out: &OutputArgs, sample: &ReturnSample, report: &RiskReport) -> Result<()> {
    prepare_out(&out.out)?;
    match out.format {
        Format::Json => {
            write_json(&out.out.join("returns.json"), sample)?;
            write_json(&out.out.join("risk_report.json"), report)
        }
        Format::Csv => {
            fs::write(out.out.join("returns.csv"), sample.to_csv())?;
            Ok(fs::write(out.out.join("risk_report.csv"), report.to_csv())?)
        }
    }
}

fn write_report(out: &OutputArgs, report: &RiskReport) -> Result<()> {
    prepare_out(&out.out)?;
    match out.format {
        Format::Json => write_json(&out.out.join("risk_report.json"), report),
        Format::Csv => Ok(fs::write(out.out.join("risk_report.csv"), report.to_csv())?),
    }
}

fn erm_solve(problem: &Problem, alpha: RiskLevel, horizon: Option<usize>, tolerance: f64) -> Result<ErmSolveReport> {
    match horizon.or(problem.default_horizon) {
        Some(h) => solve_finite(&problem.ensemble, alpha, h, None),
        None if alpha.is_infinite() => solve_robust_infinite(&problem.ensemble, tolerance),
        None => solve_infinite(&problem.ensemble, alpha, tolerance),
    }
}

fn evar_solve(
    problem: &Problem,
    beta: ConfidenceLevel,
    delta: f64,
    horizon: Option<usize>,
    tolerance: f64,
) -> Result<EvarSolveReport> {
    let mode = match horizon.or(problem.default_horizon) {
        Some(horizon) => EvarMode::Finite { horizon },
        None => EvarMode::Infinite { tolerance },
    };
    solve_evar_with(&problem.ensemble, beta, delta, mode)
}

fn sim_horizon(problem: &Problem, requested: Option<usize>) -> usize {
    requested.or(problem.default_horizon).unwrap_or(DEFAULT_SIM_HORIZON)
}

fn read_plan(path: &Path) -> Result<PolicyPlan> {
    let text = fs::read_to_string(path)?;
    let bad = |e: serde_json::Error| RasrError::Parse { line: e.line() as u64, message: e.to_string() };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(bad)?;
    let plan = value.get("plan").cloned().unwrap_or(value);
    serde_json::from_value(plan).map_err(bad)
}

fn read_returns(path: &Path) -> Result<ReturnSample> {
    let text = fs::read_to_string(path)?;
    let tag = path.file_stem().and_then(|s| s.to_str()).unwrap_or("returns").to_owned();
    if text.trim_start().starts_with(['{', '[']) {
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| RasrError::Parse { line: e.line() as u64, message: e.to_string() })?;
        let returns = value.get("returns").cloned().unwrap_or(value);
        let returns: Vec<f64> = serde_json::from_value(returns)
            .map_err(|e| RasrError::Parse { line: 1, message: e.to_string() })?;
        return ReturnSample::from_returns(returns, tag);
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| RasrError::Parse { line: 1, message: e.to_string() })?.clone();
    let column = match headers.iter().position(|h| h.trim() == "return") {
        Some(c) => c,
        None if headers.len() == 1 => 0,
        None => return Err(RasrError::Parse { line: 1, message: "no `return` column".into() }),
    };
    let mut returns = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| RasrError::Parse { line, message: e.to_string() })?;
        let cell = record.get(column).unwrap_or("").trim();
        let x: f64 = cell
            .parse()
            .map_err(|_| RasrError::Parse { line, message: format!("bad return value {cell:?}") })?;
        returns.push(x);
    }
    ReturnSample::from_returns(returns, tag)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_else(|| "none".into())
}

/// Runs a parsed command and returns the one-line summary.
pub fn run(cli: Cli) -> Result<String> {
    let start = Instant::now();
    let summary = match cli.command {
        Command::SolveErm(a) => {
            let problem = load_problem(&a.model)?;
            let report = erm_solve(&problem, a.alpha, a.horizon, a.tolerance)?;
            write_erm(&a.output, &report)?;
            format!(
                "solve-erm {} alpha={} objective={} bound={} backups={}",
                problem.name,
                a.alpha,
                fmt_f64(report.objective),
                fmt_opt(report.loss_bound),
                report.horizon_used
            )
        }
        Command::SolveEvar(a) => {
            let problem = load_problem(&a.model)?;
            let report = evar_solve(&problem, a.beta, a.delta, a.horizon, a.tolerance)?;
            write_evar(&a.output, &report)?;
            format!(
                "solve-evar {} beta={} objective={} guarantee={} alpha*={} grid={}",
                problem.name,
                fmt_f64(a.beta.value()),
                fmt_f64(report.objective),
                fmt_f64(report.guarantee),
                report.best_alpha,
                report.h_values.len()
            )
        }
        Command::Evaluate(a) => {
            let problem = load_problem(&a.model)?;
            let (plan, tag) = match &a.plan {
                Some(path) => (read_plan(path)?, path.display().to_string()),
                None => {
                    let r = evar_solve(&problem, a.beta, a.delta, None, a.tolerance)?;
                    (r.plan, format!("rasr-evar-{}", fmt_f64(a.beta.value())))
                }
            };
            let horizon = sim_horizon(&problem, a.sim.horizon);
            let sample = simulate_tagged(
                &problem.ensemble,
                &plan,
                a.sim.episodes,
                horizon,
                a.sim.seed,
                a.sim.rollout_model,
                &tag,
            )?;
            let report = risk_report(&sample, &a.sim.levels)?;
            write_sample(&a.output, &sample, &report)?;
            risk_summary("evaluate", &report)
        }
        Command::Report(a) => {
            let sample = read_returns(&a.returns)?;
            let report = risk_report(&sample, &a.levels)?;
            write_report(&a.output, &report)?;
            risk_summary("report", &report)
        }
        Command::Demo(a) => {
            let problem = load_problem(&ModelArgs { mdp: None, ensemble: Some("chain".into()), gamma: None })?;
            let beta = ConfidenceLevel::new(0.9)?;
            let solved = evar_solve(&problem, beta, 0.05, None, 1e-4)?;
            write_evar(&a.output, &solved)?;
            let sample = simulate_tagged(
                &problem.ensemble,
                &solved.plan,
                a.episodes,
                DEFAULT_SIM_HORIZON,
                a.seed,
                RolloutModel::Ensemble,
                "rasr-evar-0.9",
            )?;
            let report = risk_report(&sample, &[beta])?;
            write_sample(&a.output, &sample, &report)?;
            let l = &report.levels[0];
            format!(
                "demo chain objective={} alpha*={} evar={} cvar={} var={}",
                fmt_f64(solved.objective),
                solved.best_alpha,
                fmt_f64(l.evar),
                fmt_f64(l.cvar),
                fmt_f64(l.var)
            )
        }
    };
    Ok(format!("{summary} wall={:.3}s", start.elapsed().as_secs_f64()))
}

fn risk_summary(cmd: &str, report: &RiskReport) -> String {
    let mut s = format!("{cmd} episodes={} mean={}", report.episodes, fmt_f64(report.mean));
    for l in &report.levels {
        s.push_str(&format!(" evar@{}={}", fmt_f64(l.beta.value()), fmt_f64(l.evar)));
    }
    if report.wide_confidence_warning {
        s.push_str(" warning=small-sample");
    }
    s
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    code: i32,
    message: String,
}

/// Machine-readable error line written to stderr.
pub fn error_record(err: &RasrError) -> String {
    let rec = ErrorRecord { error: ErrorBody { kind: err.kind(), code: err.exit_code(), message: err.to_string() } };
    serde_json::to_string(&rec).expect("error record serializes")
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("RASR_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| validation(format!("RASR_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| RasrError::Internal(e.to_string()))
}

/// Entry point of the binary; returns the process exit status.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match configure_threads().and_then(|()| run(cli)) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_record(&e));
            e.exit_code()
        }
    }
}
