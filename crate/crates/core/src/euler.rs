//! Euler-like discretization of a diffusion on a uniform grid.
//!
//! ```text
//! X_{t_{i+1}} = X_{t_i} + b(t_i, X_{t_i}) Δ + σ(t_i, X_{t_i}) √Δ Y_{i+1}
//! ```
//!
//! The innovations `Y_i` are any i.i.d. law with the GC(α) property, not
//! necessarily Gaussian. Besides simulation this module provides the bound on
//! the Lipschitz constant of the one-step flow sensitivity, together with a
//! coupled-path Monte-Carlo estimate of the same quantity.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::innovations::InnovationLaw;
use crate::par;
use crate::rng::StreamKey;

/// Drift and diffusion coefficients of an SDE.
pub trait Coefficients: Send + Sync + Debug {
    fn state_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn drift(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;
    fn diffusion(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64>;

    /// Affine coefficients admit closed-form terminal moments.
    fn as_affine(&self) -> Option<&Affine> {
        None
    }
}

/// `b(t, x) = A x + a`, `σ(t, x) = S` (constant).
#[derive(Debug, Clone)]
pub struct Affine {
    pub drift_matrix: DMatrix<f64>,
    pub drift_offset: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl Coefficients for Affine {
    fn state_dim(&self) -> usize {
        self.drift_offset.len()
    }

    fn noise_dim(&self) -> usize {
        self.sigma.ncols()
    }

    fn drift(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        &self.drift_matrix * x + &self.drift_offset
    }

    fn diffusion(&self, _t: f64, _x: &DVector<f64>) -> DMatrix<f64> {
        self.sigma.clone()
    }

    fn as_affine(&self) -> Option<&Affine> {
        Some(self)
    }
}

/// Scalar mean-reverting model with state-dependent volatility:
/// `b(x) = -κx`, `σ(x) = base + amp·sin(x)`.
#[derive(Debug, Clone, Copy)]
pub struct SinVol {
    pub reversion: f64,
    pub base: f64,
    pub amp: f64,
}

impl Coefficients for SinVol {
    fn state_dim(&self) -> usize {
        1
    }

    fn noise_dim(&self) -> usize {
        1
    }

    fn drift(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, -self.reversion * x[0])
    }

    fn diffusion(&self, _t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.base + self.amp * x[0].sin())
    }
}

/// Spectral norm.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.norm();
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Coefficients together with their declared regularity constants.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    pub name: String,
    coefficients: Arc<dyn Coefficients>,
    /// `[b]_1`.
    pub lip_b: f64,
    /// `[σ]_1`, in operator norm.
    pub lip_sigma: f64,
    /// `|σ|_∞`, in operator norm.
    pub sup_sigma: f64,
}

const SPOT_CHECK_PAIRS: usize = 1000;
const SPOT_CHECK_SEED: u64 = 0x11_b5_c4_ec;
const SPOT_CHECK_SLACK: f64 = 1e-9;

impl DiffusionModel {
    /// Builds a model and spot-checks the declared constants on 1000 random
    /// pairs; any violation is a hard error.
    pub fn new(
        name: impl Into<String>,
        coefficients: Arc<dyn Coefficients>,
        lip_b: f64,
        lip_sigma: f64,
        sup_sigma: f64,
    ) -> Result<Self> {
        let name = name.into();
        if !(lip_b >= 0.0 && lip_sigma >= 0.0) {
            return Err(Error::domain("Lipschitz constants must be nonnegative"));
        }
        if !(sup_sigma > 0.0) {
            return Err(Error::domain("sup bound of sigma must be positive"));
        }
        let model = DiffusionModel { name, coefficients, lip_b, lip_sigma, sup_sigma };
        model.spot_check()?;
        Ok(model)
    }

    fn spot_check(&self) -> Result<()> {
        let d = self.state_dim();
        let mut rng = StreamKey::new(SPOT_CHECK_SEED).rng();
        let point = |rng: &mut crate::rng::StreamRng| {
            DVector::from_fn(d, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal))
        };
        for _ in 0..SPOT_CHECK_PAIRS {
            let t = rng.random::<f64>() * 10.0;
            let x = point(&mut rng);
            let x2 = point(&mut rng);
            let dist = (&x - &x2).norm();
            let db = (self.drift(t, &x) - self.drift(t, &x2)).norm();
            if db > self.lip_b * dist * (1.0 + SPOT_CHECK_SLACK) + SPOT_CHECK_SLACK {
                return Err(Error::ConstantViolation(format!(
                    "model `{}`: |b(x)-b(x')| = {db} exceeds [b]_1·|x-x'| = {}",
                    self.name,
                    self.lip_b * dist
                )));
            }
            let s = self.diffusion(t, &x);
            let ds = operator_norm(&(&s - self.diffusion(t, &x2)));
            if ds > self.lip_sigma * dist * (1.0 + SPOT_CHECK_SLACK) + SPOT_CHECK_SLACK {
                return Err(Error::ConstantViolation(format!(
                    "model `{}`: ‖σ(x)-σ(x')‖ = {ds} exceeds [σ]_1·|x-x'| = {}",
                    self.name,
                    self.lip_sigma * dist
                )));
            }
            let ns = operator_norm(&s);
            if ns > self.sup_sigma * (1.0 + SPOT_CHECK_SLACK) {
                return Err(Error::ConstantViolation(format!(
                    "model `{}`: ‖σ(x)‖ = {ns} exceeds |σ|_∞ = {}",
                    self.name, self.sup_sigma
                )));
            }
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.coefficients.state_dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.coefficients.noise_dim()
    }

    pub fn drift(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        self.coefficients.drift(t, x)
    }

    pub fn diffusion(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        self.coefficients.diffusion(t, x)
    }

    pub fn as_affine(&self) -> Option<&Affine> {
        self.coefficients.as_affine()
    }

    /// Exact mean and covariance of `X_T^Δ` for affine models, valid for any
    /// zero-mean identity-covariance innovation law.
    pub fn affine_terminal_moments(
        &self,
        grid: &SchemeGrid,
        x0: &DVector<f64>,
    ) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let a = self.as_affine()?;
        let d = self.state_dim();
        let delta = grid.delta();
        let step = DMatrix::identity(d, d) + &a.drift_matrix * delta;
        let noise = &a.sigma * a.sigma.transpose() * delta;
        let mut mean = x0.clone();
        let mut cov = DMatrix::zeros(d, d);
        for _ in 0..grid.steps {
            mean = &step * mean + &a.drift_offset * delta;
            cov = &step * cov * step.transpose() + &noise;
        }
        Some((mean, cov))
    }

    /// `b ≡ 0`, `σ ≡ I_d`.
    pub fn constant(dim: usize) -> Result<Self> {
        let affine = Affine {
            drift_matrix: DMatrix::zeros(dim, dim),
            drift_offset: DVector::zeros(dim),
            sigma: DMatrix::identity(dim, dim),
        };
        Self::new("constant", Arc::new(affine), 0.0, 0.0, 1.0)
    }

    /// `b(x) = -x`, `σ ≡ I_d`.
    pub fn ornstein_uhlenbeck(dim: usize) -> Result<Self> {
        let affine = Affine {
            drift_matrix: -DMatrix::identity(dim, dim),
            drift_offset: DVector::zeros(dim),
            sigma: DMatrix::identity(dim, dim),
        };
        Self::new("ou", Arc::new(affine), 1.0, 0.0, 1.0)
    }

    /// `b(x) = -x`, `σ(x) = 0.5 + 0.4 sin x`.
    pub fn sin_vol() -> Result<Self> {
        let c = SinVol { reversion: 1.0, base: 0.5, amp: 0.4 };
        Self::new("sin-vol", Arc::new(c), c.reversion, c.amp, c.base.abs() + c.amp.abs())
    }

    /// Affine model from a parameter table. Constants not supplied are
    /// computed from the matrices.
    pub fn affine(
        drift_matrix: DMatrix<f64>,
        drift_offset: DVector<f64>,
        sigma: DMatrix<f64>,
        declared: (Option<f64>, Option<f64>, Option<f64>),
    ) -> Result<Self> {
        let d = drift_offset.len();
        if drift_matrix.shape() != (d, d) || sigma.nrows() != d || sigma.ncols() == 0 {
            return Err(Error::domain("affine model: inconsistent matrix shapes"));
        }
        let lip_b = declared.0.unwrap_or_else(|| operator_norm(&drift_matrix));
        let lip_sigma = declared.1.unwrap_or(0.0);
        let sup_sigma = declared.2.unwrap_or_else(|| operator_norm(&sigma));
        let affine = Affine { drift_matrix, drift_offset, sigma };
        Self::new("affine", Arc::new(affine), lip_b, lip_sigma, sup_sigma)
    }
}

pub const MODEL_NAMES: &[&str] = &["constant", "ou", "sin-vol"];

/// Looks up a built-in model; `dim` applies to the multidimensional ones.
pub fn builtin_model(name: &str, dim: usize) -> Result<DiffusionModel> {
    match name {
        "constant" => DiffusionModel::constant(dim),
        "ou" => DiffusionModel::ornstein_uhlenbeck(dim),
        "sin-vol" if dim == 1 => DiffusionModel::sin_vol(),
        "sin-vol" => Err(Error::domain("sin-vol is a scalar model")),
        other => Err(Error::domain(format!(
            "unknown model `{other}`; available: {}",
            MODEL_NAMES.join(", ")
        ))),
    }
}

/// Uniform time grid `t_i = iΔ`, `Δ = T/N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchemeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl SchemeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::domain("grid needs at least one step"));
        }
        Ok(SchemeGrid { horizon, steps })
    }

    pub fn delta(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.delta()
        }
    }
}

fn check_finite(x: &DVector<f64>, context: impl FnOnce() -> String) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(context()))
    }
}

/// Advances `x` in place by one scheme step with innovation `y`.
pub fn euler_step_in_place(
    model: &DiffusionModel,
    t: f64,
    x: &mut DVector<f64>,
    delta: f64,
    y: &DVector<f64>,
) -> Result<()> {
    let b = model.drift(t, x);
    let s = model.diffusion(t, x);
    x.axpy(delta, &b, 1.0);
    x.gemv(delta.sqrt(), &s, y, 1.0);
    check_finite(x, || format!("euler step at t={t}"))
}

/// `x + b(t,x)Δ + σ(t,x)√Δ y`.
pub fn euler_step(
    model: &DiffusionModel,
    t: f64,
    x: &DVector<f64>,
    delta: f64,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!("time step must be positive, got {delta}")));
    }
    let mut next = x.clone();
    euler_step_in_place(model, t, &mut next, delta, y)?;
    Ok(next)
}

/// Terminal value driven by an explicit innovation sequence (one per step).
pub fn simulate_terminal_with<'a, I>(
    model: &DiffusionModel,
    grid: &SchemeGrid,
    x0: &DVector<f64>,
    innovations: I,
) -> Result<DVector<f64>>
where
    I: IntoIterator<Item = &'a DVector<f64>>,
{
    let delta = grid.delta();
    let mut x = x0.clone();
    let mut taken = 0;
    for (i, y) in innovations.into_iter().take(grid.steps).enumerate() {
        euler_step_in_place(model, grid.node(i), &mut x, delta, y)?;
        taken += 1;
    }
    if taken != grid.steps {
        return Err(Error::domain(format!("need {} innovations, got {taken}", grid.steps)));
    }
    Ok(x)
}

/// Terminal value `X_T^Δ` of one path drawn from `stream`.
pub fn simulate_terminal(
    model: &DiffusionModel,
    grid: &SchemeGrid,
    x0: &DVector<f64>,
    stream: StreamKey,
    law: &InnovationLaw,
) -> Result<DVector<f64>> {
    if law.dim != model.noise_dim() {
        return Err(Error::domain(format!(
            "law dimension {} does not match model noise dimension {}",
            law.dim,
            model.noise_dim()
        )));
    }
    if x0.len() != model.state_dim() {
        return Err(Error::domain("initial state has wrong dimension"));
    }
    let mut rng = stream.rng();
    let delta = grid.delta();
    let mut x = x0.clone();
    let mut y = DVector::zeros(law.dim);
    for i in 0..grid.steps {
        law.sample_into(&mut rng, &mut y);
        euler_step_in_place(model, grid.node(i), &mut x, delta, &y)
            .map_err(|_| Error::numeric(format!("path {:?}, step {i}", stream)))?;
    }
    Ok(x)
}

/// Bound on, and optionally an estimate of, the Lipschitz constant of the
/// step-`i` flow sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowSensitivity {
    pub step_index: usize,
    pub bound_value: f64,
    pub empirical_value: Option<f64>,
}

/// Default BDG-type constant `c_q = 2√q`.
pub fn default_c_q(q: usize) -> f64 {
    2.0 * (q as f64).sqrt()
}

/// Exponential rate `[b]_1 + c[σ]_1 (1 ∨ c[σ]_1)` shared by the flow bound
/// and the Monte-Carlo constant Ψ.
pub fn flow_growth_rate(lip_b: f64, lip_sigma: f64, c_q: f64) -> f64 {
    let cs = c_q * lip_sigma;
    lip_b + cs * cs.max(1.0)
}

/// `2[f]_1|σ|_∞ exp({[b]_1 + c[σ]_1(1∨c[σ]_1)}(T - t_i))` for `i < N`, and
/// `[f]_1|σ|_∞` at `i = N`.
pub fn flow_lipschitz_bound(
    model: &DiffusionModel,
    f_lip: f64,
    grid: &SchemeGrid,
    i: usize,
    c_q: f64,
) -> Result<FlowSensitivity> {
    if i == 0 || i > grid.steps {
        return Err(Error::domain(format!("step index {i} outside [1, {}]", grid.steps)));
    }
    if !(c_q > 0.0) || !(f_lip >= 0.0) {
        return Err(Error::domain("c_q must be positive and [f]_1 nonnegative"));
    }
    let bound_value = if i == grid.steps {
        f_lip * model.sup_sigma
    } else {
        let rate = flow_growth_rate(model.lip_b, model.lip_sigma, c_q);
        2.0 * f_lip * model.sup_sigma * (rate * (grid.horizon - grid.node(i))).exp()
    };
    Ok(FlowSensitivity { step_index: i, bound_value, empirical_value: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub replications: usize,
}

/// Monte-Carlo estimate of `E[sup_{j∈[i,N]} |X_j - X'_j| / |y - y'|]` where the
/// two paths start at time `t_i` from `x + b(t_{i-1},x)Δ + σ(t_{i-1},x)y` and
/// the same with `y'`, and share all later innovations.
#[allow(clippy::too_many_arguments)]
pub fn empirical_flow_sensitivity(
    model: &DiffusionModel,
    grid: &SchemeGrid,
    i: usize,
    x: &DVector<f64>,
    y: &DVector<f64>,
    y_alt: &DVector<f64>,
    replications: usize,
    stream: StreamKey,
    law: &InnovationLaw,
) -> Result<FlowEstimate> {
    if i == 0 || i > grid.steps {
        return Err(Error::domain(format!("step index {i} outside [1, {}]", grid.steps)));
    }
    if replications == 0 {
        return Err(Error::domain("need at least one replication"));
    }
    let scale = (y - y_alt).norm();
    if !(scale > 0.0) {
        return Err(Error::domain("perturbed innovations must differ"));
    }
    if law.dim != model.noise_dim() {
        return Err(Error::domain("law dimension does not match model"));
    }
    let delta = grid.delta();
    let t_prev = grid.node(i - 1);
    let base = x + model.drift(t_prev, x) * delta;
    let s = model.diffusion(t_prev, x);
    let start = &base + &s * y;
    let start_alt = &base + &s * y_alt;
    let initial_gap = (&s * (y - y_alt)).norm();

    let samples = par::try_map_indexed(replications, |rep| -> Result<f64> {
        let mut rng = stream.replication(rep as u64).rng();
        let mut a = start.clone();
        let mut b = start_alt.clone();
        let mut sup = initial_gap;
        let mut innov = DVector::zeros(law.dim);
        for k in i..grid.steps {
            law.sample_into(&mut rng, &mut innov);
            let t = grid.node(k);
            euler_step_in_place(model, t, &mut a, delta, &innov)?;
            euler_step_in_place(model, t, &mut b, delta, &innov)?;
            sup = sup.max((&a - &b).norm());
        }
        Ok(sup / scale)
    })?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(FlowEstimate { mean, std_error: (var / n).sqrt(), replications })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::innovations::LawKind;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn single_steps() {
        let c = DiffusionModel::constant(1).unwrap();
        let x = euler_step(&c, 0.0, &v(&[0.0]), 0.01, &v(&[1.0])).unwrap();
        assert_relative_eq!(x[0], 0.1, max_relative = 1e-15);

        let ou = DiffusionModel::ornstein_uhlenbeck(1).unwrap();
        let x = euler_step(&ou, 0.0, &v(&[1.0]), 0.1, &v(&[0.0])).unwrap();
        assert_relative_eq!(x[0], 0.9, max_relative = 1e-15);

        let still = DiffusionModel::affine(
            DMatrix::zeros(2, 2),
            DVector::zeros(2),
            DMatrix::zeros(2, 2),
            (None, None, Some(1.0)),
        )
        .unwrap();
        let x0 = v(&[1.5, -2.0]);
        assert_eq!(euler_step(&still, 0.3, &x0, 0.2, &v(&[4.0, 5.0])).unwrap(), x0);

        assert!(euler_step(&c, 0.0, &x0, 0.0, &v(&[1.0])).is_err());
    }

    #[test]
    fn non_finite_state_is_reported() {
        let blow = DiffusionModel::affine(
            DMatrix::from_element(1, 1, 1e300),
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            (None, None, None),
        )
        .unwrap();
        let err = euler_step(&blow, 0.0, &v(&[1e300]), 1.0, &v(&[0.0])).unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }));
    }

    #[test]
    fn forced_innovations() {
        let c = DiffusionModel::constant(1).unwrap();
        let grid = SchemeGrid::new(1.0, 4).unwrap();
        let ones = vec![v(&[1.0]); 4];
        let x = simulate_terminal_with(&c, &grid, &v(&[0.0]), &ones).unwrap();
        assert_relative_eq!(x[0], 2.0, max_relative = 1e-15);
        assert!(simulate_terminal_with(&c, &grid, &v(&[0.0]), &ones[..3]).is_err());
    }

    #[test]
    fn zero_noise_is_deterministic_recursion() {
        let ou = DiffusionModel::ornstein_uhlenbeck(1).unwrap();
        let grid = SchemeGrid::new(1.0, 10).unwrap();
        let law = InnovationLaw::standard(LawKind::Zero, 1).unwrap();
        let x = simulate_terminal(&ou, &grid, &v(&[1.0]), StreamKey::new(4), &law).unwrap();
        let mut expect = 1.0f64;
        for _ in 0..10 {
            expect += -expect * 0.1;
        }
        assert_eq!(x[0], expect);
        assert_relative_eq!(x[0], 0.9f64.powi(10), max_relative = 1e-14);
    }

    #[test]
    fn additive_model_is_translation_equivariant() {
        let c = DiffusionModel::constant(2).unwrap();
        let grid = SchemeGrid::new(2.0, 16).unwrap();
        let law = InnovationLaw::standard(LawKind::Gaussian, 2).unwrap();
        let k = StreamKey::new(10).path(3);
        let a = simulate_terminal(&c, &grid, &v(&[0.0, 0.0]), k, &law).unwrap();
        let b = simulate_terminal(&c, &grid, &v(&[0.5, -1.0]), k, &law).unwrap();
        assert_relative_eq!(b[0] - a[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(b[1] - a[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn terminal_law_of_constant_model_is_standard_normal() {
        let c = DiffusionModel::constant(1).unwrap();
        let grid = SchemeGrid::new(1.0, 5).unwrap();
        let law = InnovationLaw::standard(LawKind::Gaussian, 1).unwrap();
        let n = 100_000;
        let mut xs: Vec<f64> = par::try_map_indexed(n, |p| {
            simulate_terminal(&c, &grid, &v(&[0.0]), StreamKey::new(21).path(p as u64), &law).map(|x| x[0])
        })
        .unwrap();
        xs.sort_by(f64::total_cmp);
        let ks = xs
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let cdf = crate::numerics::normal_cdf(x);
                (cdf - k as f64 / n as f64).abs().max((cdf - (k + 1) as f64 / n as f64).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS distance {ks}");
    }

    #[test]
    fn terminal_is_reproducible() {
        let m = DiffusionModel::sin_vol().unwrap();
        let grid = SchemeGrid::new(1.0, 50).unwrap();
        let law = InnovationLaw::standard(LawKind::Gaussian, 1).unwrap();
        let k = StreamKey::new(77).replication(2).path(9);
        let a = simulate_terminal(&m, &grid, &v(&[0.2]), k, &law).unwrap();
        let b = simulate_terminal(&m, &grid, &v(&[0.2]), k, &law).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    #[test]
    fn declared_constants_are_spot_checked() {
        let too_small = DiffusionModel::affine(
            -DMatrix::identity(1, 1) * 2.0,
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            (Some(1.0), None, None),
        );
        assert!(matches!(too_small, Err(Error::ConstantViolation(_))));
        let bad_sup = DiffusionModel::new(
            "sv",
            Arc::new(SinVol { reversion: 1.0, base: 0.5, amp: 0.4 }),
            1.0,
            0.4,
            0.5,
        );
        assert!(matches!(bad_sup, Err(Error::ConstantViolation(_))));
        assert!(builtin_model("heston", 1).is_err());
        assert!(builtin_model("sin-vol", 2).is_err());
    }

    #[test]
    fn flow_bound_values() {
        let c = DiffusionModel::constant(1).unwrap();
        let grid = SchemeGrid::new(1.0, 10).unwrap();
        assert_eq!(flow_lipschitz_bound(&c, 1.0, &grid, 10, 2.0).unwrap().bound_value, 1.0);
        assert_eq!(flow_lipschitz_bound(&c, 1.0, &grid, 3, 2.0).unwrap().bound_value, 2.0);
        assert!(flow_lipschitz_bound(&c, 1.0, &grid, 0, 2.0).is_err());
        assert!(flow_lipschitz_bound(&c, 1.0, &grid, 11, 2.0).is_err());

        // T - t_1 = 1 with T = 1.1, N = 11.
        let ou = DiffusionModel::ornstein_uhlenbeck(1).unwrap();
        let grid = SchemeGrid::new(1.1, 11).unwrap();
        let b = flow_lipschitz_bound(&ou, 1.0, &grid, 1, 2.0).unwrap().bound_value;
        assert_relative_eq!(b, 2.0 * std::f64::consts::E, max_relative = 1e-12);
    }

    #[test]
    fn flow_bound_nonincreasing_in_step() {
        let m = DiffusionModel::sin_vol().unwrap();
        let grid = SchemeGrid::new(2.0, 40).unwrap();
        let bounds: Vec<f64> = (1..40)
            .map(|i| flow_lipschitz_bound(&m, 1.0, &grid, i, default_c_q(1)).unwrap().bound_value)
            .collect();
        assert!(bounds.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn coupled_paths_constant_and_contracting() {
        let law = InnovationLaw::standard(LawKind::Gaussian, 1).unwrap();
        let grid = SchemeGrid::new(1.0, 10).unwrap();
        let (x, y, y2) = (v(&[0.3]), v(&[0.7]), v(&[-0.4]));

        let c = DiffusionModel::constant(1).unwrap();
        let e = empirical_flow_sensitivity(&c, &grid, 3, &x, &y, &y2, 50, StreamKey::new(1), &law).unwrap();
        assert_relative_eq!(e.mean, 1.0, max_relative = 1e-12);

        let ou = DiffusionModel::ornstein_uhlenbeck(1).unwrap();
        let e = empirical_flow_sensitivity(&ou, &grid, 1, &x, &y, &y2, 50, StreamKey::new(1), &law).unwrap();
        assert_relative_eq!(e.mean, 1.0, max_relative = 1e-12);

        assert!(empirical_flow_sensitivity(&ou, &grid, 1, &x, &y, &y, 5, StreamKey::new(1), &law).is_err());
    }

    #[test]
    fn sin_vol_sensitivity_below_bound() {
        let m = DiffusionModel::sin_vol().unwrap();
        let law = InnovationLaw::standard(LawKind::Gaussian, 1).unwrap();
        let grid = SchemeGrid::new(1.0, 20).unwrap();
        for i in [1, 10, 20] {
            let e = empirical_flow_sensitivity(&m, &grid, i, &v(&[0.1]), &v(&[0.5]), &v(&[-0.5]), 1000, StreamKey::new(8), &law)
                .unwrap();
            let b = flow_lipschitz_bound(&m, 1.0, &grid, i, default_c_q(1)).unwrap();
            assert!(e.mean - 5.0 * e.std_error <= b.bound_value, "i={i}: {e:?} vs {b:?}");
        }
    }
}
