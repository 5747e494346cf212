//! Registry of verification scenarios and the pipelines that run them.

use std::path::PathBuf;

use nalgebra::DVector;

use crate::config::{Family, LawConfig, ScenarioConfig};
use crate::error::{Error, Result};
use crate::euler::{builtin_model, DiffusionModel, SchemeGrid};
use crate::innovations::{InnovationLaw, LawKind};
use crate::montecarlo::{DeviationCertificate, LipschitzFunction};
use crate::numerics::{normal_cdf, normal_sf};
use crate::rng::StreamKey;
use crate::robbins_monro::{builtin_problem, RMProblem, StepSchedule};
use crate::verify::{exact_gaussian_oracle, verify_mc_bound, verify_rm_bound, Reference, Sampling, TailReport, VerifyOptions};

pub const SCENARIO_NAMES: &[&str] = &[
    "constant-gaussian",
    "constant-rademacher",
    "ou-gaussian",
    "sin-vol-gaussian",
    "mean-gaussian",
    "mean-rademacher",
    "noiseless",
];

fn euler_defaults(name: &str, model: &str, kind: LawKind, steps: usize, samples: usize, x0: f64) -> ScenarioConfig {
    ScenarioConfig {
        scenario: name.to_string(),
        family: Family::Euler,
        seed: 1,
        replications: 10_000,
        confidence: 0.999,
        r_grid: vec![],
        enumerate: false,
        law: LawConfig { kind, dim: 1, alpha: None },
        steps,
        model: model.to_string(),
        horizon: 1.0,
        samples,
        x0: vec![x0],
        c_q: None,
        pilot_factor: 100,
        problem: "mean".to_string(),
        c: 1.0,
        rho: 1.0,
        theta0: vec![0.0],
        output: None::<PathBuf>,
    }
}

fn rm_defaults(name: &str, problem: &str, kind: LawKind, c: f64, steps: usize, theta0: f64) -> ScenarioConfig {
    ScenarioConfig {
        family: Family::RobbinsMonro,
        problem: problem.to_string(),
        c,
        theta0: vec![theta0],
        ..euler_defaults(name, "constant", kind, steps, 1, 0.0)
    }
}

/// Default configuration of a registry scenario.
pub fn defaults(name: &str) -> Option<ScenarioConfig> {
    let grid = |g: &[f64]| g.to_vec();
    let cfg = match name {
        "constant-gaussian" => ScenarioConfig {
            r_grid: grid(&[0.1, 0.2, 0.3, 0.5]),
            ..euler_defaults(name, "constant", LawKind::Gaussian, 10, 100, 0.0)
        },
        "constant-rademacher" => ScenarioConfig {
            r_grid: grid(&[0.5, 1.0, 1.5, 2.0]),
            enumerate: true,
            ..euler_defaults(name, "constant", LawKind::Rademacher, 10, 1, 0.0)
        },
        "ou-gaussian" => ScenarioConfig {
            r_grid: grid(&[0.5, 1.0, 1.5]),
            ..euler_defaults(name, "ou", LawKind::Gaussian, 20, 100, 1.0)
        },
        "sin-vol-gaussian" => ScenarioConfig {
            r_grid: grid(&[1.0, 2.0, 3.0]),
            replications: 2000,
            ..euler_defaults(name, "sin-vol", LawKind::Gaussian, 20, 50, 0.2)
        },
        "mean-gaussian" => ScenarioConfig {
            r_grid: grid(&[0.1, 0.2, 0.3, 0.4, 0.5]),
            ..rm_defaults(name, "mean", LawKind::Gaussian, 1.0, 100, 0.0)
        },
        "mean-rademacher" => ScenarioConfig {
            r_grid: (1..=10).map(|k| k as f64 / 10.0).collect(),
            enumerate: true,
            ..rm_defaults(name, "mean", LawKind::Rademacher, 1.0, 12, 0.0)
        },
        "noiseless" => ScenarioConfig {
            r_grid: grid(&[0.0, 0.1, 0.5]),
            replications: 100,
            ..rm_defaults(name, "noiseless", LawKind::Zero, 0.5, 10, 1.0)
        },
        _ => return None,
    };
    Some(cfg)
}

pub fn law_for(cfg: &ScenarioConfig) -> Result<InnovationLaw> {
    InnovationLaw::new(cfg.law.kind, cfg.law.dim, cfg.law.alpha())
}

pub fn model_for(cfg: &ScenarioConfig) -> Result<DiffusionModel> {
    builtin_model(&cfg.model, cfg.law.dim)
}

pub fn problem_for(cfg: &ScenarioConfig) -> Result<RMProblem> {
    builtin_problem(&cfg.problem, law_for(cfg)?)
}

pub fn schedule_for(cfg: &ScenarioConfig) -> Result<StepSchedule> {
    StepSchedule::power(cfg.c, cfg.rho)
}

fn options(cfg: &ScenarioConfig) -> VerifyOptions {
    VerifyOptions {
        sampling: if cfg.enumerate {
            Sampling::Enumerate
        } else {
            Sampling::MonteCarlo { replications: cfg.replications }
        },
        confidence: cfg.confidence,
        stream: StreamKey::new(cfg.seed),
    }
}

/// Exact law of `|θ_N - θ*|` for mean estimation of a scalar Gaussian: `θ_N`
/// is an affine function of the innovations. Returns `r ↦ P(|θ_N| >= r + δ_N)`.
fn mean_gaussian_oracle(schedule: &StepSchedule, theta0: f64, n: usize) -> Result<Option<impl Fn(f64) -> f64 + Sync>> {
    let (mut mu, mut var) = (theta0, 0.0f64);
    for k in 1..=n {
        let g = schedule.gamma(k)?;
        mu *= 1.0 - g;
        var = (1.0 - g).powi(2) * var + g * g;
    }
    if var <= 0.0 {
        return Ok(None);
    }
    let s = var.sqrt();
    let delta = s * (2.0 / std::f64::consts::PI).sqrt() * (-mu * mu / (2.0 * var)).exp()
        + mu * (1.0 - 2.0 * normal_cdf(-mu / s));
    Ok(Some(move |r: f64| {
        let t = r + delta;
        normal_sf((t - mu) / s) + normal_sf((t + mu) / s)
    }))
}

/// Runs the verification pipeline of a scenario.
pub fn run_verify(cfg: &ScenarioConfig) -> Result<TailReport> {
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let law = law_for(cfg)?;
    let opts = options(cfg);
    match cfg.family {
        Family::Euler => {
            let model = model_for(cfg)?;
            let grid = SchemeGrid::new(cfg.horizon, cfg.steps)?;
            let f = LipschitzFunction::coordinate(0, model.state_dim())?;
            let x0 = DVector::from_column_slice(&cfg.x0);
            let cert = DeviationCertificate::for_model(&model, &grid, f.lip, cfg.samples, law.alpha, cfg.c_q())?;
            let moments = model.affine_terminal_moments(&grid, &x0);
            let reference = match (&moments, &f.linear) {
                (Some((mean, _)), Some(u)) => Reference::Exact(u.dot(mean)),
                _ => Reference::Pilot { samples: cfg.pilot_factor * cfg.samples },
            };
            let scale = match (&moments, &f.linear, law.kind) {
                (Some((_, cov)), Some(u), LawKind::Gaussian) => {
                    let v = (u.transpose() * cov * u)[(0, 0)];
                    (v > 0.0).then(|| (v / cfg.samples as f64).sqrt())
                }
                _ => None,
            };
            let oracle = scale.map(|s| move |r: f64| exact_gaussian_oracle(s, r).unwrap_or(f64::NAN));
            verify_mc_bound(
                &model,
                &grid,
                &f,
                &x0,
                &law,
                &cert,
                reference,
                oracle.as_ref().map(|o| o as &(dyn Fn(f64) -> f64 + Sync)),
                &cfg.r_grid,
                &opts,
            )
        }
        Family::RobbinsMonro => {
            let problem = problem_for(cfg)?;
            let schedule = schedule_for(cfg)?;
            let theta0 = DVector::from_column_slice(&cfg.theta0);
            let oracle = if cfg.problem == "mean" && law.kind == LawKind::Gaussian && law.dim == 1 {
                mean_gaussian_oracle(&schedule, cfg.theta0[0], cfg.steps)?
            } else {
                None
            };
            verify_rm_bound(
                &problem,
                &schedule,
                &theta0,
                cfg.steps,
                oracle.as_ref().map(|o| o as &(dyn Fn(f64) -> f64 + Sync)),
                &cfg.r_grid,
                &opts,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_registry_entry_validates() {
        for name in SCENARIO_NAMES {
            let cfg = defaults(name).unwrap();
            assert!(cfg.problems().is_empty(), "{name}: {:?}", cfg.problems());
        }
    }

    #[test]
    fn mean_oracle_reduces_to_running_average() {
        // γ_n = 1/n forgets θ_0 after one step: θ_N ~ N(0, 1/N), δ_N = √(2/(πN)).
        let s = StepSchedule::power(1.0, 1.0).unwrap();
        let n = 100;
        let oracle = mean_gaussian_oracle(&s, 5.0, n).unwrap().unwrap();
        let delta = (2.0 / (std::f64::consts::PI * n as f64)).sqrt();
        for r in [0.0, 0.1, 0.3] {
            let expect = exact_gaussian_oracle(0.1, r + delta).unwrap();
            assert!((oracle(r) - expect).abs() <= 1e-12 * expect.max(1e-300) + 1e-15);
        }
    }
}
