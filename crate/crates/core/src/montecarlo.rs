//! Monte-Carlo estimation of `E[f(X_T^Δ)]` and its Gaussian concentration
//! certificate.
//!
//! For `M` independent scheme paths and an `[f]_1`-Lipschitz `f`,
//!
//! ```text
//! P(|E_M - E f(X_T^Δ)| >= r) <= 2 exp(-r² M / (T Ψ))
//! Ψ = 4α [f]_1² |σ|_∞² exp(2([b]_1 + c[σ]_1 (1 ∨ c[σ]_1)) T)
//! ```
//!
//! The one-sided martingale bound `exp(-r² / (α Σ w_i²))` that underlies it is
//! exposed as [`gc_martingale_bound`].

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::euler::{flow_growth_rate, simulate_terminal, DiffusionModel, SchemeGrid};
use crate::innovations::InnovationLaw;
use crate::numerics::compensated_sum;
use crate::par;
use crate::rng::StreamKey;

type Evaluator = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;

/// A real function on `R^d` with a declared Lipschitz constant.
#[derive(Clone)]
pub struct LipschitzFunction {
    pub name: String,
    evaluator: Arc<Evaluator>,
    /// `[f]_1`.
    pub lip: f64,
    /// Set when `f` is linear, i.e. `f(x) = <u, x>`.
    pub linear: Option<DVector<f64>>,
}

impl fmt::Debug for LipschitzFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LipschitzFunction").field("name", &self.name).field("lip", &self.lip).finish()
    }
}

const SPOT_CHECK_PAIRS: usize = 1000;

impl LipschitzFunction {
    /// Wraps `evaluator` and spot-checks the declared constant on 1000 random
    /// pairs in `R^dim`.
    pub fn new<F>(name: impl Into<String>, dim: usize, lip: f64, evaluator: F) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        let name = name.into();
        if !(lip >= 0.0) {
            return Err(Error::domain("Lipschitz constant must be nonnegative"));
        }
        let mut rng = StreamKey::new(0xf1_1c_4e).rng();
        for _ in 0..SPOT_CHECK_PAIRS {
            let x = DVector::from_fn(dim, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
            let x2 = DVector::from_fn(dim, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
            let dist = (&x - &x2).norm();
            let df = (evaluator(&x) - evaluator(&x2)).abs();
            if df > lip * dist * (1.0 + 1e-9) + 1e-9 {
                return Err(Error::ConstantViolation(format!(
                    "function `{name}`: |f(x)-f(x')| = {df} exceeds [f]_1·|x-x'| = {}",
                    lip * dist
                )));
            }
        }
        Ok(LipschitzFunction { name, evaluator: Arc::new(evaluator), lip, linear: None })
    }

    /// `x ↦ x_k`.
    pub fn coordinate(k: usize, dim: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::domain("coordinate index out of range"));
        }
        let mut u = DVector::zeros(dim);
        u[k] = 1.0;
        Self::linear(u)
    }

    /// `x ↦ <u, x>`, with `[f]_1 = |u|`.
    pub fn linear(u: DVector<f64>) -> Result<Self> {
        let w = u.clone();
        let mut f = Self::new("linear", u.len(), u.norm(), move |x| w.dot(x))?;
        f.linear = Some(u);
        Ok(f)
    }

    /// `x ↦ |x|`.
    pub fn euclidean_norm(dim: usize) -> Result<Self> {
        Self::new("norm", dim, 1.0, |x| x.norm())
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        (self.evaluator)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub samples: usize,
    pub seed: u64,
}

/// `(1/M) Σ f(X_T^{Δ,j})` over `M` paths; path `j` uses `stream.path(j)`.
pub fn mc_estimate(
    model: &DiffusionModel,
    grid: &SchemeGrid,
    f: &LipschitzFunction,
    x0: &DVector<f64>,
    samples: usize,
    stream: StreamKey,
    law: &InnovationLaw,
) -> Result<McEstimate> {
    if samples == 0 {
        return Err(Error::domain("M must be >= 1"));
    }
    let values = par::try_map_indexed(samples, |j| {
        simulate_terminal(model, grid, x0, stream.path(j as u64), law).map(|x| f.eval(&x))
    })?;
    Ok(McEstimate {
        mean: compensated_sum(values) / samples as f64,
        samples,
        seed: stream.seed,
    })
}

/// `Ψ = 4α[f]_1²|σ|_∞² exp(2([b]_1 + c[σ]_1(1∨c[σ]_1))T)`.
pub fn psi_constant(
    horizon: f64,
    f_lip: f64,
    sup_sigma: f64,
    lip_b: f64,
    lip_sigma: f64,
    alpha: f64,
    c_q: f64,
) -> Result<f64> {
    if !(alpha > 0.0 && horizon > 0.0 && sup_sigma > 0.0 && c_q > 0.0) {
        return Err(Error::domain("alpha, T, |σ|_∞ and c_q must be positive"));
    }
    if !(f_lip >= 0.0 && lip_b >= 0.0 && lip_sigma >= 0.0) {
        return Err(Error::domain("Lipschitz constants must be nonnegative"));
    }
    let rate = flow_growth_rate(lip_b, lip_sigma, c_q);
    Ok(4.0 * alpha * f_lip * f_lip * sup_sigma * sup_sigma * (2.0 * rate * horizon).exp())
}

/// Deviation certificate for an `M`-sample Monte-Carlo mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationCertificate {
    pub psi: f64,
    pub horizon: f64,
    pub samples: usize,
    pub alpha: f64,
    pub c_q: f64,
}

impl DeviationCertificate {
    pub fn new(psi: f64, horizon: f64, samples: usize, alpha: f64, c_q: f64) -> Result<Self> {
        if !(psi > 0.0 && horizon > 0.0) || samples == 0 {
            return Err(Error::domain("certificate needs Ψ > 0, T > 0, M >= 1"));
        }
        Ok(DeviationCertificate { psi, horizon, samples, alpha, c_q })
    }

    /// Certificate for `model` on `grid` with test function constant `f_lip`.
    pub fn for_model(
        model: &DiffusionModel,
        grid: &SchemeGrid,
        f_lip: f64,
        samples: usize,
        alpha: f64,
        c_q: f64,
    ) -> Result<Self> {
        let psi = psi_constant(grid.horizon, f_lip, model.sup_sigma, model.lip_b, model.lip_sigma, alpha, c_q)?;
        Self::new(psi, grid.horizon, samples, alpha, c_q)
    }

    /// `r² M / (T Ψ)`.
    fn exponent(&self, r: f64) -> f64 {
        r * r * self.samples as f64 / (self.horizon * self.psi)
    }

    /// Unclamped `2 exp(-r²M/(TΨ))`.
    pub fn raw_two_sided(&self, r: f64) -> f64 {
        2.0 * (-self.exponent(r)).exp()
    }

    /// Unclamped `exp(-r²M/(TΨ))`.
    pub fn raw_one_sided(&self, r: f64) -> f64 {
        (-self.exponent(r)).exp()
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("r must be >= 0, got {r}")))
    }
}

/// Two-sided bound `min(1, 2 exp(-r²M/(TΨ)))`.
pub fn mc_deviation_bound(cert: &DeviationCertificate, r: f64) -> Result<f64> {
    check_radius(r)?;
    Ok(cert.raw_two_sided(r).min(1.0))
}

/// One-sided bound `min(1, exp(-r²M/(TΨ)))` on `P(E_M - E f >= r)`.
pub fn mc_deviation_bound_one_sided(cert: &DeviationCertificate, r: f64) -> Result<f64> {
    check_radius(r)?;
    Ok(cert.raw_one_sided(r).min(1.0))
}

/// Radius `r` at which the two-sided bound equals `delta`.
pub fn mc_confidence_radius(cert: &DeviationCertificate, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok((cert.horizon * cert.psi * (2.0 / delta).ln() / cert.samples as f64).sqrt())
}

/// `min(1, exp(-r² / (α Σ w_i²)))` for a weighted sum of GC(α) martingale
/// increments with weights `w_i = [f_i]_1 γ_i`.
pub fn gc_martingale_bound(alpha: f64, weights: &[f64], r: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::domain("alpha must be > 0"));
    }
    check_radius(r)?;
    if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::domain("weights must be a nonempty list of nonnegative reals"));
    }
    let energy = compensated_sum(weights.iter().map(|w| w * w));
    if energy == 0.0 {
        return Err(Error::DegenerateWeights);
    }
    Ok((-r * r / (alpha * energy)).exp().min(1.0))
}
