//! Robbins-Monro recursion `θ_{n+1} = θ_n - γ_{n+1} H(θ_n, Y_{n+1})` and its
//! non-asymptotic certificates.
//!
//! With `Π_N = ∏_{k<N} (1 - 2λγ_{k+1} + [H]_1²γ_{k+1}²)` and `Γ_N = Σ_{k<=N} γ_k`:
//!
//! ```text
//! P(|θ_N - θ*| >= r + δ_N) <= exp(-r² / (α [H]_1² Π_N Σ_{k<=N} γ_k²/Π_k))
//! δ_N <= e^{-λΓ_N}|θ_0 - θ*| + [H]_1 σ_Y (Σ_{k<N} e^{-2λ(Γ_N - Γ_{k+1})} γ_{k+1}²)^{1/2}
//! ```
//!
//! `Π_k` spans hundreds of orders of magnitude for long runs, so every product
//! is carried as a partial sum of logarithms.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::innovations::{InnovationLaw, LawKind};
use crate::numerics::{compensated_sum, CompensatedSum};
use crate::par;
use crate::rng::StreamKey;

type UpdateFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;

/// A stochastic root-finding problem `h(θ) = E[H(θ, Y)] = 0`.
#[derive(Clone)]
pub struct RMProblem {
    pub name: String,
    pub dim: usize,
    update: Arc<UpdateFn>,
    /// Joint Lipschitz constant of `(θ, y) ↦ H(θ, y)`.
    pub lip_h: f64,
    /// Uniform attractivity constant `λ`.
    pub lambda_min: f64,
    pub law: InnovationLaw,
    pub theta_star: Option<DVector<f64>>,
    pub sigma_y: Option<f64>,
}

impl fmt::Debug for RMProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RMProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("lip_h", &self.lip_h)
            .field("lambda_min", &self.lambda_min)
            .field("law", &self.law)
            .field("theta_star", &self.theta_star)
            .finish()
    }
}

impl RMProblem {
    /// Validates `0 < λ <= [H]_1` and spot-checks the joint Lipschitz
    /// property of `update` on 1000 random pairs.
    pub fn new<F>(
        name: impl Into<String>,
        dim: usize,
        update: F,
        lip_h: f64,
        lambda_min: f64,
        law: InnovationLaw,
    ) -> Result<Self>
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        let name = name.into();
        if !(lambda_min > 0.0 && lip_h > 0.0) {
            return Err(Error::domain("λ and [H]_1 must be positive"));
        }
        if lambda_min > lip_h {
            return Err(Error::domain(format!(
                "attractivity λ = {lambda_min} cannot exceed the Lipschitz constant [H]_1 = {lip_h}"
            )));
        }
        let q = law.dim;
        let mut rng = StreamKey::new(0x4a_11_5e).rng();
        let mut gauss = |n: usize| DVector::from_fn(n, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
        for _ in 0..1000 {
            let (t1, y1, t2, y2) = (gauss(dim), gauss(q), gauss(dim), gauss(q));
            let dist = ((&t1 - &t2).norm_squared() + (&y1 - &y2).norm_squared()).sqrt();
            let dh = (update(&t1, &y1) - update(&t2, &y2)).norm();
            if dh > lip_h * dist * (1.0 + 1e-9) + 1e-9 {
                return Err(Error::ConstantViolation(format!(
                    "problem `{name}`: |H - H'| = {dh} exceeds [H]_1·dist = {}",
                    lip_h * dist
                )));
            }
        }
        Ok(RMProblem {
            name,
            dim,
            update: Arc::new(update),
            lip_h,
            lambda_min,
            law,
            theta_star: None,
            sigma_y: None,
        })
    }

    pub fn with_target(mut self, theta_star: DVector<f64>) -> Self {
        self.theta_star = Some(theta_star);
        self
    }

    pub fn with_sigma_y(mut self, sigma_y: f64) -> Self {
        self.sigma_y = Some(sigma_y);
        self
    }

    pub fn update(&self, theta: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        (self.update)(theta, y)
    }

    /// Mean estimation `H(θ, y) = θ - y`, target `θ* = 0`; `λ = 1`, `[H]_1 = √2`.
    pub fn mean_estimation(law: InnovationLaw) -> Result<Self> {
        let d = law.dim;
        Ok(Self::new("mean", d, |t, y| t - y, std::f64::consts::SQRT_2, 1.0, law)?
            .with_target(DVector::zeros(d)))
    }

    /// `H(θ, y) = θ` driven by point-mass noise; `λ = [H]_1 = 1`, `θ* = 0`.
    pub fn noiseless_linear(dim: usize) -> Result<Self> {
        let law = InnovationLaw::standard(LawKind::Zero, dim)?;
        Ok(Self::new("noiseless", dim, |t, _| t.clone(), 1.0, 1.0, law)?
            .with_target(DVector::zeros(dim))
            .with_sigma_y(0.0))
    }
}

pub const PROBLEM_NAMES: &[&str] = &["mean", "noiseless"];

pub fn builtin_problem(name: &str, law: InnovationLaw) -> Result<RMProblem> {
    match name {
        "mean" => RMProblem::mean_estimation(law),
        "noiseless" => RMProblem::noiseless_linear(law.dim),
        other => Err(Error::domain(format!(
            "unknown problem `{other}`; available: {}",
            PROBLEM_NAMES.join(", ")
        ))),
    }
}

/// Step sequence `(γ_n)_{n>=1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StepSchedule {
    /// `γ_n = c / n^ρ` with `ρ ∈ (1/2, 1]`.
    Power { c: f64, rho: f64 },
    /// A finite explicit list `γ_1, γ_2, ...`.
    Explicit { steps: Vec<f64> },
}

impl StepSchedule {
    pub fn power(c: f64, rho: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::domain(format!("step constant c must be positive, got {c}")));
        }
        if !(rho > 0.5 && rho <= 1.0) {
            return Err(Error::domain(format!("ρ must lie in (1/2, 1], got {rho}")));
        }
        Ok(StepSchedule::Power { c, rho })
    }

    pub fn explicit(steps: Vec<f64>) -> Result<Self> {
        if steps.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::domain("explicit steps must be finite and nonnegative"));
        }
        Ok(StepSchedule::Explicit { steps })
    }

    /// `γ_n` for `n >= 1`.
    pub fn gamma(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::domain("steps are indexed from 1"));
        }
        match self {
            StepSchedule::Power { c, rho } => Ok(if *rho == 1.0 { c / n as f64 } else { c / (n as f64).powf(*rho) }),
            StepSchedule::Explicit { steps } => steps
                .get(n - 1)
                .copied()
                .ok_or_else(|| Error::domain(format!("explicit schedule has only {} steps, need {n}", steps.len()))),
        }
    }

    /// `γ_1 .. γ_N`.
    pub fn steps(&self, n: usize) -> Result<Vec<f64>> {
        (1..=n).map(|k| self.gamma(k)).collect()
    }
}

/// `θ - γ H(θ, y)`.
pub fn rm_step(problem: &RMProblem, theta: &DVector<f64>, gamma: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
    if !(gamma > 0.0) {
        return Err(Error::domain(format!("step must be positive, got {gamma}")));
    }
    let next = theta - problem.update(theta, y) * gamma;
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::numeric("Robbins-Monro step"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RMTrajectory {
    pub thetas: Vec<DVector<f64>>,
    pub seed: u64,
}

impl RMTrajectory {
    pub fn terminal(&self) -> &DVector<f64> {
        self.thetas.last().expect("trajectory holds θ_0")
    }
}

/// Runs `N` steps with innovations supplied explicitly.
pub fn rm_run_with<'a, I>(
    problem: &RMProblem,
    schedule: &StepSchedule,
    theta0: &DVector<f64>,
    innovations: I,
    seed: u64,
) -> Result<RMTrajectory>
where
    I: IntoIterator<Item = &'a DVector<f64>>,
{
    let mut thetas = vec![theta0.clone()];
    for (k, y) in innovations.into_iter().enumerate() {
        let gamma = schedule.gamma(k + 1)?;
        let next = rm_step(problem, thetas.last().unwrap(), gamma, y)
            .map_err(|e| match e {
                Error::Numeric { .. } => Error::numeric(format!("Robbins-Monro step {}", k + 1)),
                e => e,
            })?;
        thetas.push(next);
    }
    Ok(RMTrajectory { thetas, seed })
}

/// `N` steps with i.i.d. innovations drawn from `stream`.
pub fn rm_run(
    problem: &RMProblem,
    schedule: &StepSchedule,
    theta0: &DVector<f64>,
    n: usize,
    stream: StreamKey,
) -> Result<RMTrajectory> {
    if n == 0 {
        return Err(Error::domain("N must be >= 1"));
    }
    if theta0.len() != problem.dim {
        return Err(Error::domain("θ_0 has wrong dimension"));
    }
    let innovations = problem.law.sample(stream, n);
    rm_run_with(problem, schedule, theta0, &innovations, stream.seed)
}

/// Terminal iterate only; avoids storing the trajectory.
pub fn rm_terminal(
    problem: &RMProblem,
    schedule: &StepSchedule,
    theta0: &DVector<f64>,
    n: usize,
    stream: StreamKey,
) -> Result<DVector<f64>> {
    let mut rng = stream.rng();
    let mut theta = theta0.clone();
    let mut y = DVector::zeros(problem.law.dim);
    for k in 1..=n {
        problem.law.sample_into(&mut rng, &mut y);
        theta = rm_step(problem, &theta, schedule.gamma(k)?, &y)?;
    }
    Ok(theta)
}

/// `Γ_N = Σ_{k=1}^N γ_k`.
pub fn gamma_sum(schedule: &StepSchedule, n: usize) -> Result<f64> {
    Ok(compensated_sum(schedule.steps(n)?))
}

/// `ln Π_0, ln Π_1, ..., ln Π_N`.
pub fn log_pi_partials(problem: &RMProblem, schedule: &StepSchedule, n: usize) -> Result<Vec<f64>> {
    let (lam, h2) = (problem.lambda_min, problem.lip_h * problem.lip_h);
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = CompensatedSum::new();
    out.push(0.0);
    for k in 1..=n {
        let g = schedule.gamma(k)?;
        let factor = 1.0 - 2.0 * lam * g + h2 * g * g;
        if !(factor > 0.0) {
            return Err(Error::DegenerateFactor { step: k, factor });
        }
        acc.add(factor.ln());
        out.push(acc.value());
    }
    Ok(out)
}

/// `Π_N = ∏_{k=0}^{N-1} (1 - 2λγ_{k+1} + [H]_1²γ_{k+1}²)`.
pub fn pi_product(problem: &RMProblem, schedule: &StepSchedule, n: usize) -> Result<f64> {
    Ok(log_pi_partials(problem, schedule, n)?[n].exp())
}

/// `Π_N Σ_{k=1}^N γ_k² / Π_k`.
pub fn variance_factor(problem: &RMProblem, schedule: &StepSchedule, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("variance factor needs N >= 1"));
    }
    let log_pi = log_pi_partials(problem, schedule, n)?;
    let last = log_pi[n];
    let terms = (1..=n).map(|k| {
        let g = schedule.gamma(k).expect("checked by log_pi_partials");
        if g == 0.0 {
            0.0
        } else {
            (2.0 * g.ln() - log_pi[k] + last).exp()
        }
    });
    Ok(compensated_sum(terms))
}

/// `min(1, exp(-r² / (α [H]_1² · variance_factor)))`.
pub fn rm_deviation_bound(problem: &RMProblem, schedule: &StepSchedule, n: usize, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::domain(format!("r must be >= 0, got {r}")));
    }
    let v = variance_factor(problem, schedule, n)?;
    let denom = problem.law.alpha * problem.lip_h * problem.lip_h * v;
    Ok((-r * r / denom).exp().min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasCertificate {
    pub steps: usize,
    pub bias_bound: f64,
    /// `e^{-λΓ_N} |θ_0 - θ*|`.
    pub initial_term: f64,
    /// `[H]_1 σ_Y (Σ e^{-2λ(Γ_N - Γ_{k+1})} γ_{k+1}²)^{1/2}`.
    pub noise_term: f64,
}

/// Upper bound on `δ_N = E|θ_N - θ*|`.
pub fn rm_bias_bound(
    problem: &RMProblem,
    schedule: &StepSchedule,
    n: usize,
    initial_gap: f64,
    sigma_y: f64,
) -> Result<BiasCertificate> {
    if !(initial_gap >= 0.0 && sigma_y >= 0.0) {
        return Err(Error::domain("initial gap and σ_Y must be nonnegative"));
    }
    let lam = problem.lambda_min;
    let gammas = schedule.steps(n)?;
    let initial_term = (-lam * compensated_sum(gammas.iter().copied())).exp() * initial_gap;
    // Γ_N - Γ_{k+1} is the tail sum γ_{k+2} + ... + γ_N, accumulated backwards.
    let mut tail = CompensatedSum::new();
    let mut terms = Vec::with_capacity(n);
    for g in gammas.iter().rev() {
        terms.push((-2.0 * lam * tail.value()).exp() * g * g);
        tail.add(*g);
    }
    let noise_term = problem.lip_h * sigma_y * compensated_sum(terms.into_iter().rev()).sqrt();
    Ok(BiasCertificate { steps: n, bias_bound: initial_term + noise_term, initial_term, noise_term })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaYEstimate {
    pub value: f64,
    pub std_error: f64,
    pub outer: usize,
    pub inner: usize,
}

/// Nested Monte-Carlo estimate of `σ_Y = E[F(Y)²]^{1/2}`, `F(y) = E|y - Y|`.
///
/// Outer draw `j` and its inner sample come from replication `j` of `stream`.
pub fn sigma_y_estimate(law: &InnovationLaw, outer: usize, inner: usize, stream: StreamKey) -> Result<SigmaYEstimate> {
    if outer < 2 || inner < 2 {
        return Err(Error::domain("σ_Y estimation needs outer, inner >= 2"));
    }
    let squares = par::map_indexed(outer, |j| {
        let mut rng = stream.replication(j as u64).rng();
        let y = law.draw(&mut rng);
        let mut other = DVector::zeros(law.dim);
        let mut acc = CompensatedSum::new();
        for _ in 0..inner {
            law.sample_into(&mut rng, &mut other);
            acc.add((&y - &other).norm());
        }
        let f = acc.value() / inner as f64;
        f * f
    });
    let n = outer as f64;
    let mean = compensated_sum(squares.iter().copied()) / n;
    let var = compensated_sum(squares.iter().map(|s| (s - mean).powi(2))) / (n - 1.0);
    let value = mean.sqrt();
    let std_error = if value > 0.0 { (var / n).sqrt() / (2.0 * value) } else { 0.0 };
    Ok(SigmaYEstimate { value, std_error, outer, inner })
}

/// `σ_Y` in closed form where the law allows it: the point mass, and
/// Rademacher vectors of dimension at most 10 by enumeration.
pub fn sigma_y_exact(law: &InnovationLaw) -> Option<f64> {
    match law.kind {
        LawKind::Zero => Some(0.0),
        LawKind::Rademacher if law.dim <= 10 => {
            let q = law.dim;
            let count = 1usize << q;
            // |y - y'| depends only on the number of differing signs.
            let f = (0..count)
                .map(|m| 2.0 * (m.count_ones() as f64).sqrt())
                .sum::<f64>()
                / count as f64;
            // F is the same for every outcome by symmetry.
            Some(f)
        }
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `γ_n = c/n` with `c < 1/(2λ)`: decay `N^{-2cλ}`.
    Subcritical,
    /// `γ_n = c/n` with `c = 1/(2λ)`: decay `N^{-1}` up to a logarithm.
    Critical,
    /// `γ_n = c/n` with `c > 1/(2λ)`: decay `N^{-1}`.
    Supercritical,
    /// `γ_n = c/n^ρ`, `ρ < 1`: decay `o(N^{-ρ+ε})`.
    Polynomial,
}

/// Predicted decay of `Π_N Σ γ_k²/Π_k` for a power schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRegime {
    pub regime: Regime,
    pub exponent: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critical_c: Option<f64>,
}

impl fmt::Display for RateRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.regime {
            Regime::Polynomial => write!(f, "o(N^-{}+eps)", self.exponent),
            Regime::Critical => write!(f, "O(log N · N^-1)"),
            _ => write!(f, "O(N^-{})", self.exponent),
        }
    }
}

pub fn rate_classification(schedule: &StepSchedule, lambda_min: f64) -> Result<RateRegime> {
    let StepSchedule::Power { c, rho } = *schedule else {
        return Err(Error::NotParametric);
    };
    if !(lambda_min > 0.0) {
        return Err(Error::domain("λ must be positive"));
    }
    if rho < 1.0 {
        return Ok(RateRegime { regime: Regime::Polynomial, exponent: rho, critical_c: None });
    }
    let critical = 1.0 / (2.0 * lambda_min);
    let (regime, exponent) = if c < critical {
        (Regime::Subcritical, 2.0 * c * lambda_min)
    } else if c > critical {
        (Regime::Supercritical, 1.0)
    } else {
        (Regime::Critical, 1.0)
    };
    Ok(RateRegime { regime, exponent, critical_c: Some(critical) })
}
