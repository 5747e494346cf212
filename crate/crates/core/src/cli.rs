//! Command-line front end: argument parsing, dispatch and report emission.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;
use toml::Value;

use crate::config::{load_config, Family, ScenarioConfig};
use crate::error::{Error, Result};
use crate::euler::{default_c_q, simulate_terminal, SchemeGrid};
use crate::innovations::{gc_alpha_for, InnovationLaw, LawKind};
use crate::montecarlo::{mc_confidence_radius, mc_deviation_bound, psi_constant, DeviationCertificate};
use crate::par;
use crate::rng::StreamKey;
use crate::robbins_monro::{
    builtin_problem, rate_classification, rm_bias_bound, rm_deviation_bound, rm_run, sigma_y_estimate,
    sigma_y_exact, StepSchedule,
};
use crate::scenarios;

#[derive(Debug, Parser)]
#[command(name = "sacon", version, about = "Concentration certificates for Euler schemes and Robbins-Monro algorithms")]
pub struct Cli {
    /// Scenario configuration file (flat TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write the CSV/JSON payload here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also write the full run report (config echo and payload) as JSON.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate terminal states of the Euler scheme.
    Simulate(SimulateArgs),
    /// Evaluate a certificate.
    #[command(subcommand)]
    Bound(BoundCommand),
    /// Robbins-Monro runs and rate analysis.
    #[command(subcommand)]
    Rm(RmCommand),
    /// Empirically check a certificate on a registry scenario.
    Verify(VerifyArgs),
    /// Estimate σ_Y of an innovation law.
    SigmaY(SigmaYArgs),
}

#[derive(Debug, Subcommand)]
pub enum BoundCommand {
    /// Monte-Carlo deviation bound for the Euler scheme.
    Euler(BoundEulerArgs),
    /// Robbins-Monro deviation and bias bounds.
    Rm(BoundRmArgs),
}

#[derive(Debug, Subcommand)]
pub enum RmCommand {
    /// Run one trajectory.
    Run(RmRunArgs),
    /// Classify the decay regime of a power schedule.
    Rate(RmRateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "constant-gaussian")]
    pub scenario: String,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    #[arg(long = "N")]
    pub steps: Option<usize>,
    #[arg(long = "M")]
    pub samples: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long)]
    pub law: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BoundEulerArgs {
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long = "N", default_value_t = 1)]
    pub steps: usize,
    #[arg(long = "M", default_value_t = 1)]
    pub samples: usize,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    #[arg(long = "f-lip", default_value_t = 1.0)]
    pub f_lip: f64,
    #[arg(long = "sup-sigma", default_value_t = 1.0)]
    pub sup_sigma: f64,
    #[arg(long = "lip-b", default_value_t = 0.0)]
    pub lip_b: f64,
    #[arg(long = "lip-sigma", default_value_t = 0.0)]
    pub lip_sigma: f64,
    /// BDG-type constant; `2√q` with q = 1 by default.
    #[arg(long)]
    pub cq: Option<f64>,
    #[arg(long = "r", conflicts_with = "delta")]
    pub r: Vec<f64>,
    #[arg(long)]
    pub delta: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct BoundRmArgs {
    #[arg(long, default_value = "mean")]
    pub problem: String,
    #[arg(long, default_value = "gaussian")]
    pub law: String,
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long = "r", required = true)]
    pub r: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta0: Option<Vec<f64>>,
    /// σ_Y; exact where known, otherwise estimated with (10⁴, 10³) draws.
    #[arg(long = "sigma-y")]
    pub sigma_y: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RmRunArgs {
    #[arg(long, default_value = "mean")]
    pub problem: String,
    #[arg(long, default_value = "gaussian")]
    pub law: String,
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta0: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct RmRateArgs {
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long = "R")]
    pub replications: Option<usize>,
    #[arg(long)]
    pub confidence: Option<f64>,
    #[arg(long = "r-grid", value_delimiter = ',')]
    pub r_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub enumerate: Option<bool>,
}

#[derive(Debug, Args)]
pub struct SigmaYArgs {
    #[arg(long, default_value = "gaussian")]
    pub law: String,
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long, default_value_t = 10_000)]
    pub outer: usize,
    #[arg(long, default_value_t = 1000)]
    pub inner: usize,
}

/// Outcome of one command: payload plus full provenance.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub config: serde_json::Value,
    pub format: &'static str,
    pub payload: String,
    pub replications: Option<usize>,
    /// `Some(false)` when a dominance check failed.
    pub dominance_ok: Option<bool>,
    pub wall_clock_ms: u128,
}

impl RunReport {
    fn csv(command: &str, config: serde_json::Value, payload: String) -> Self {
        RunReport {
            command: command.to_string(),
            config,
            format: "csv",
            payload,
            replications: None,
            dominance_ok: None,
            wall_clock_ms: 0,
        }
    }
}

fn scenario_config(cli: &Cli, name: Option<&str>) -> Result<ScenarioConfig> {
    let mut cfg = match (&cli.config, name) {
        (Some(path), _) => load_config(path)?,
        (None, Some(name)) => ScenarioConfig::for_scenario(name)?,
        (None, None) => ScenarioConfig::for_scenario("constant-gaussian")?,
    };
    if let (Some(name), true) = (name, cli.config.is_some()) {
        if name != cfg.scenario {
            cfg = ScenarioConfig { scenario: name.to_string(), ..ScenarioConfig::for_scenario(name)? };
        }
    }
    Ok(cfg)
}

fn law(kind: &str, dim: usize) -> Result<InnovationLaw> {
    InnovationLaw::standard(kind.parse::<LawKind>()?, dim)
}

fn vector_or_zeros(v: &Option<Vec<f64>>, dim: usize) -> Result<DVector<f64>> {
    match v {
        Some(v) if v.len() == dim => Ok(DVector::from_column_slice(v)),
        Some(v) => Err(Error::domain(format!("expected {dim} coordinates, got {}", v.len()))),
        None => Ok(DVector::zeros(dim)),
    }
}

fn echo<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).unwrap_or(serde_json::Value::Null)
}

/// Executes the parsed command line.
pub fn dispatch(cli: &Cli) -> Result<RunReport> {
    let started = Instant::now();
    let mut report = match &cli.command {
        Command::Simulate(a) => {
            let mut cfg = scenario_config(cli, Some(&a.scenario))?;
            if cfg.family != Family::Euler {
                return Err(Error::domain(format!("scenario `{}` is not an Euler scenario", cfg.scenario)));
            }
            let mut overrides: Vec<(&str, Value)> = Vec::new();
            if let Some(s) = cli.seed {
                overrides.push(("seed", Value::Integer(s as i64)));
            }
            if let Some(m) = &a.model {
                overrides.push(("model", Value::String(m.clone())));
            }
            if let Some(t) = a.horizon {
                overrides.push(("T", Value::Float(t)));
            }
            if let Some(n) = a.steps {
                overrides.push(("N", Value::Integer(n as i64)));
            }
            if let Some(m) = a.samples {
                overrides.push(("M", Value::Integer(m as i64)));
            }
            if let Some(k) = &a.law {
                overrides.push(("law.kind", Value::String(k.clone())));
            }
            if let Some(d) = a.dim {
                overrides.push(("law.dim", Value::Integer(d as i64)));
                if a.x0.is_none() {
                    overrides.push(("x0", Value::Array(vec![Value::Float(0.0); d])));
                }
            }
            if let Some(x) = &a.x0 {
                overrides.push(("x0", Value::Array(x.iter().map(|v| Value::Float(*v)).collect())));
            }
            cfg.apply(overrides.iter().map(|(k, v)| (*k, v)))?;
            let model = scenarios::model_for(&cfg)?;
            let law = scenarios::law_for(&cfg)?;
            let grid = SchemeGrid::new(cfg.horizon, cfg.steps)?;
            let x0 = DVector::from_column_slice(&cfg.x0);
            let stream = StreamKey::new(cfg.seed);
            let paths = par::try_map_indexed(cfg.samples, |p| {
                simulate_terminal(&model, &grid, &x0, stream.path(p as u64), &law)
            })?;
            let mut csv = String::from("path");
            for k in 0..model.state_dim() {
                write!(csv, ",x{k}").unwrap();
            }
            csv.push('\n');
            for (p, x) in paths.iter().enumerate() {
                write!(csv, "{p}").unwrap();
                for v in x.iter() {
                    write!(csv, ",{v}").unwrap();
                }
                csv.push('\n');
            }
            let mut r = RunReport::csv("simulate", echo(&cfg), csv);
            r.replications = Some(cfg.samples);
            r
        }
        Command::Bound(BoundCommand::Euler(a)) => {
            let c_q = a.cq.unwrap_or_else(|| default_c_q(1));
            let psi = psi_constant(a.horizon, a.f_lip, a.sup_sigma, a.lip_b, a.lip_sigma, a.alpha, c_q)?;
            SchemeGrid::new(a.horizon, a.steps)?;
            let cert = DeviationCertificate::new(psi, a.horizon, a.samples, a.alpha, c_q)?;
            let mut csv = String::new();
            if !a.delta.is_empty() {
                csv.push_str("delta,radius\n");
                for &d in &a.delta {
                    writeln!(csv, "{d},{}", mc_confidence_radius(&cert, d)?).unwrap();
                }
            } else {
                if a.r.is_empty() {
                    return Err(Error::domain("give at least one --r or --delta"));
                }
                csv.push_str("r,bound\n");
                for &r in &a.r {
                    writeln!(csv, "{r},{}", mc_deviation_bound(&cert, r)?).unwrap();
                }
            }
            RunReport::csv("bound euler", echo(&cert), csv)
        }
        Command::Bound(BoundCommand::Rm(a)) => {
            let law = law(&a.law, a.dim)?;
            let problem = builtin_problem(&a.problem, law)?;
            let schedule = StepSchedule::power(a.c, a.rho)?;
            let theta0 = vector_or_zeros(&a.theta0, problem.dim)?;
            let target = problem.theta_star.clone().unwrap_or_else(|| DVector::zeros(problem.dim));
            let (sigma_y, source) = match (a.sigma_y, problem.sigma_y, sigma_y_exact(&law)) {
                (Some(s), ..) => (s, "supplied"),
                (None, Some(s), _) => (s, "problem"),
                (None, None, Some(s)) => (s, "exact"),
                (None, None, None) => {
                    let seed = cli.seed.unwrap_or(1);
                    (sigma_y_estimate(&law, 10_000, 1000, StreamKey::new(seed))?.value, "estimated")
                }
            };
            let bias = rm_bias_bound(&problem, &schedule, a.n, (&theta0 - &target).norm(), sigma_y)?;
            let mut csv = String::from("r,bound,bias_bound\n");
            for &r in &a.r {
                writeln!(csv, "{r},{},{}", rm_deviation_bound(&problem, &schedule, a.n, r)?, bias.bias_bound).unwrap();
            }
            let config = serde_json::json!({
                "problem": a.problem, "law": law, "schedule": schedule, "n": a.n,
                "theta0": theta0.as_slice(), "sigma_y": sigma_y, "sigma_y_source": source, "bias": bias,
            });
            RunReport::csv("bound rm", config, csv)
        }
        Command::Rm(RmCommand::Run(a)) => {
            let law = law(&a.law, a.dim)?;
            let problem = builtin_problem(&a.problem, law)?;
            let schedule = StepSchedule::power(a.c, a.rho)?;
            let theta0 = vector_or_zeros(&a.theta0, problem.dim)?;
            let seed = cli.seed.unwrap_or(1);
            let traj = rm_run(&problem, &schedule, &theta0, a.n, StreamKey::new(seed))?;
            let mut csv = String::from("n");
            for k in 0..problem.dim {
                write!(csv, ",theta{k}").unwrap();
            }
            csv.push('\n');
            for (n, t) in traj.thetas.iter().enumerate() {
                write!(csv, "{n}").unwrap();
                for v in t.iter() {
                    write!(csv, ",{v}").unwrap();
                }
                csv.push('\n');
            }
            let config = serde_json::json!({
                "problem": a.problem, "law": law, "schedule": schedule, "n": a.n,
                "theta0": theta0.as_slice(), "seed": seed,
            });
            RunReport::csv("rm run", config, csv)
        }
        Command::Rm(RmCommand::Rate(a)) => {
            let schedule = StepSchedule::power(a.c, a.rho)?;
            let regime = rate_classification(&schedule, a.lambda)?;
            let line = serde_json::to_string(&regime).expect("serializable") + "\n";
            let config = serde_json::json!({ "schedule": schedule, "lambda": a.lambda });
            RunReport { format: "json", ..RunReport::csv("rm rate", config, line) }
        }
        Command::Verify(a) => {
            let mut cfg = scenario_config(cli, a.scenario.as_deref())?;
            let mut overrides: Vec<(&str, Value)> = Vec::new();
            if let Some(s) = cli.seed {
                overrides.push(("seed", Value::Integer(s as i64)));
            }
            if let Some(r) = a.replications {
                overrides.push(("R", Value::Integer(r as i64)));
            }
            if let Some(c) = a.confidence {
                overrides.push(("confidence", Value::Float(c)));
            }
            if let Some(g) = &a.r_grid {
                overrides.push(("r_grid", Value::Array(g.iter().map(|v| Value::Float(*v)).collect())));
            }
            if let Some(e) = a.enumerate {
                overrides.push(("enumerate", Value::Boolean(e)));
            }
            cfg.apply(overrides.iter().map(|(k, v)| (*k, v)))?;
            let tail = scenarios::run_verify(&cfg)?;
            let mut r = RunReport::csv("verify", echo(&cfg), tail.to_csv());
            r.replications = Some(tail.replications);
            r.dominance_ok = Some(tail.all_dominated());
            r
        }
        Command::SigmaY(a) => {
            let law = law(&a.law, a.dim)?;
            let seed = cli.seed.unwrap_or(1);
            let est = sigma_y_estimate(&law, a.outer, a.inner, StreamKey::new(seed))?;
            let exact = sigma_y_exact(&law).map(|v| v.to_string()).unwrap_or_default();
            let csv = format!("sigma_y,std_error,outer,inner,exact\n{},{},{},{},{exact}\n", est.value, est.std_error, a.outer, a.inner);
            let config = serde_json::json!({ "law": law, "seed": seed, "alpha_default": gc_alpha_for(law.kind) });
            RunReport::csv("sigma-y", config, csv)
        }
    };
    report.wall_clock_ms = started.elapsed().as_millis();
    Ok(report)
}

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const NUMERIC: i32 = 2;
    pub const DOMINANCE: i32 = 3;
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numeric { .. } | Error::DegenerateFactor { .. } | Error::DegenerateWeights => exit::NUMERIC,
        _ => exit::USAGE,
    }
}

/// Parses `args`, runs, writes output; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::SUCCESS };
            let _ = e.print();
            return code;
        }
    };
    let result = par::with_threads(cli.threads, || dispatch(&cli));
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let out = cli.out.clone().or_else(|| {
        matches!(cli.command, Command::Verify(_))
            .then(|| report.config.get("output").and_then(|o| o.as_str()).map(PathBuf::from))
            .flatten()
    });
    let written = match &out {
        Some(path) => std::fs::write(path, &report.payload),
        None => {
            print!("{}", report.payload);
            Ok(())
        }
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return exit::USAGE;
    }
    if let Some(path) = &cli.report {
        let json = serde_json::to_string_pretty(&report).expect("serializable");
        if let Err(e) = std::fs::write(path, json) {
            eprintln!("error: {e}");
            return exit::USAGE;
        }
    }
    if report.dominance_ok == Some(false) {
        eprintln!("dominance check failed");
        return exit::DOMINANCE;
    }
    exit::SUCCESS
}
