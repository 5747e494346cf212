//! Innovation laws with the Gaussian concentration property GC(α).
//!
//! A law satisfies GC(α) when every 1-Lipschitz statistic `f` has
//! `E[exp(λ(f(Y) - E f(Y)))] <= exp(αλ²/4)`. The consequence used everywhere
//! in this crate is the sub-Gaussian tail `P(f(Y) - E f(Y) >= r) <= exp(-r²/α)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LawKind {
    /// `N(0, I_q)`.
    Gaussian,
    /// i.i.d. uniform signs in each coordinate.
    Rademacher,
    /// The point mass at the origin; used for noiseless runs.
    Zero,
}

impl LawKind {
    pub fn name(self) -> &'static str {
        match self {
            LawKind::Gaussian => "gaussian",
            LawKind::Rademacher => "rademacher",
            LawKind::Zero => "zero",
        }
    }
}

impl fmt::Display for LawKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LawKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "standard_gaussian" => Ok(LawKind::Gaussian),
            "rademacher" => Ok(LawKind::Rademacher),
            "zero" | "degenerate_zero" => Ok(LawKind::Zero),
            other => Err(Error::UnknownLaw(other.to_string())),
        }
    }
}

/// The GC constant bundled with each supported law.
///
/// Gaussian: α = 2. Rademacher: α = 2 as well (Hoeffding's lemma in one
/// dimension, tensorized). The point mass satisfies GC(α) for every α; 2 is
/// used so that all built-in laws share one constant.
pub fn gc_alpha_for(kind: LawKind) -> f64 {
    match kind {
        LawKind::Gaussian | LawKind::Rademacher | LawKind::Zero => 2.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnovationLaw {
    pub kind: LawKind,
    pub dim: usize,
    pub alpha: f64,
}

impl InnovationLaw {
    pub fn new(kind: LawKind, dim: usize, alpha: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("innovation dimension must be >= 1"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::domain(format!("GC constant must be positive, got {alpha}")));
        }
        Ok(InnovationLaw { kind, dim, alpha })
    }

    /// Law of the given kind with its bundled GC constant.
    pub fn standard(kind: LawKind, dim: usize) -> Result<Self> {
        Self::new(kind, dim, gc_alpha_for(kind))
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut DVector<f64>) {
        debug_assert_eq!(out.len(), self.dim);
        match self.kind {
            LawKind::Gaussian => out.iter_mut().for_each(|v| *v = rng.sample(StandardNormal)),
            LawKind::Rademacher => out
                .iter_mut()
                .for_each(|v| *v = if rng.random::<bool>() { 1.0 } else { -1.0 }),
            LawKind::Zero => out.fill(0.0),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim);
        self.sample_into(rng, &mut y);
        y
    }

    /// `count` i.i.d. draws from the stream addressed by `stream`.
    pub fn sample(&self, stream: StreamKey, count: usize) -> Vec<DVector<f64>> {
        let mut rng = stream.rng();
        (0..count).map(|_| self.draw(&mut rng)).collect()
    }
}

/// `min(1, exp(-r²/α))`.
pub fn gc_tail_bound(alpha: f64, r: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::domain(format!("alpha must be > 0, got {alpha}")));
    }
    if !(r >= 0.0) {
        return Err(Error::domain(format!("r must be >= 0, got {r}")));
    }
    Ok((-r * r / alpha).exp().min(1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub sample_count: usize,
    pub mean: Vec<f64>,
    /// Row-major `q x q` empirical covariance.
    pub covariance: Vec<f64>,
    pub tolerance: f64,
    pub mean_ok: bool,
    pub covariance_ok: bool,
}

impl MomentReport {
    pub fn passed(&self) -> bool {
        self.mean_ok && self.covariance_ok
    }
}

/// Checks `E[Y] = 0` and `E[YYᵀ] = I` empirically at tolerance `5/√n` per entry.
pub fn validate_moments(law: &InnovationLaw, sample_count: usize, stream: StreamKey) -> Result<MomentReport> {
    if sample_count < 100 {
        return Err(Error::domain("moment validation needs at least 100 samples"));
    }
    let q = law.dim;
    let mut rng = stream.rng();
    let mut y = DVector::zeros(q);
    let mut sum = DVector::<f64>::zeros(q);
    let mut second = DMatrix::<f64>::zeros(q, q);
    for _ in 0..sample_count {
        law.sample_into(&mut rng, &mut y);
        sum += &y;
        second.ger(1.0, &y, &y, 1.0);
    }
    let n = sample_count as f64;
    let mean = sum / n;
    let cov = second / n - &mean * mean.transpose();
    let tolerance = 5.0 / n.sqrt();
    let mean_ok = mean.iter().all(|m| m.abs() <= tolerance);
    let covariance_ok = (0..q).all(|i| {
        (0..q).all(|j| {
            let target = if i == j { 1.0 } else { 0.0 };
            (cov[(i, j)] - target).abs() <= tolerance
        })
    });
    Ok(MomentReport {
        sample_count,
        mean: mean.iter().copied().collect(),
        covariance: (0..q).flat_map(|i| (0..q).map(move |j| (i, j))).map(|ij| cov[ij]).collect(),
        tolerance,
        mean_ok,
        covariance_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn bundled_constants() {
        assert_eq!(gc_alpha_for(LawKind::Gaussian), 2.0);
        assert_eq!(gc_alpha_for(LawKind::Zero), 2.0);
        assert_eq!(gc_alpha_for(LawKind::Rademacher), 2.0);
        assert!(matches!("cauchy".parse::<LawKind>(), Err(Error::UnknownLaw(_))));
    }

    /// Exhaustive check of the GC(2) moment inequality for Rademacher vectors:
    /// every outcome of `{-1, 1}^q` is enumerated, and several 1-Lipschitz
    /// statistics are tested on a λ grid.
    #[test]
    fn rademacher_satisfies_gc2_by_enumeration() {
        let alpha = gc_alpha_for(LawKind::Rademacher);
        for q in [1usize, 2, 3, 5, 8, 10, 12] {
            let outcomes: Vec<Vec<f64>> = (0..1u32 << q)
                .map(|m| (0..q).map(|k| if m >> k & 1 == 1 { 1.0 } else { -1.0 }).collect())
                .collect();
            let mut tests: Vec<Box<dyn Fn(&[f64]) -> f64>> = vec![
                Box::new(|y: &[f64]| y.iter().map(|v| v * v).sum::<f64>().sqrt()),
                Box::new(|y: &[f64]| y.iter().cloned().fold(f64::MIN, f64::max)),
                Box::new(|y: &[f64]| y[0].abs().min(0.3)),
            ];
            for seed in 0..4u64 {
                let u: Vec<f64> = (0..q).map(|k| ((k as f64 + 1.0) * (seed as f64 + 0.7)).sin()).collect();
                let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                tests.push(Box::new(move |y: &[f64]| {
                    y.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() / norm
                }));
            }
            for f in &tests {
                let values: Vec<f64> = outcomes.iter().map(|y| f(y)).collect();
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                for step in 1..=50 {
                    let lambda = step as f64 * 0.1;
                    let mgf = values.iter().map(|v| (lambda * (v - mean)).exp()).sum::<f64>()
                        / values.len() as f64;
                    assert!(
                        mgf <= (alpha * lambda * lambda / 4.0).exp() * (1.0 + 1e-12),
                        "q={q} λ={lambda} mgf={mgf}"
                    );
                }
            }
        }
    }

    #[test]
    fn zero_law_samples_zeros() {
        let law = InnovationLaw::standard(LawKind::Zero, 3).unwrap();
        let s = law.sample(StreamKey::new(99), 2);
        assert_eq!(s, vec![DVector::zeros(3), DVector::zeros(3)]);
    }

    #[test]
    fn rademacher_support() {
        let law = InnovationLaw::standard(LawKind::Rademacher, 1).unwrap();
        for y in law.sample(StreamKey::new(5), 4) {
            assert!(y[0] == 1.0 || y[0] == -1.0);
        }
    }

    #[test]
    fn gaussian_mean_within_clt_band() {
        let n = 100_000;
        let law = InnovationLaw::standard(LawKind::Gaussian, 2).unwrap();
        let s = law.sample(StreamKey::new(3), n);
        let tol = 5.0 / (n as f64).sqrt();
        for c in 0..2 {
            let m = s.iter().map(|y| y[c]).sum::<f64>() / n as f64;
            assert!(m.abs() < tol, "coordinate {c} mean {m}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let law = InnovationLaw::standard(LawKind::Gaussian, 3).unwrap();
        let k = StreamKey::new(1).replication(2).path(3);
        assert_eq!(law.sample(k, 10), law.sample(k, 10));
    }

    #[test]
    fn tail_bound_values() {
        assert_eq!(gc_tail_bound(2.0, 0.0).unwrap(), 1.0);
        assert_relative_eq!(gc_tail_bound(2.0, 2.0).unwrap(), 0.135_335_283_236_612_7, max_relative = 1e-12);
        assert_relative_eq!(gc_tail_bound(8.0, 2.0).unwrap(), 0.606_530_659_712_633_4, max_relative = 1e-12);
        assert!(gc_tail_bound(0.0, 1.0).is_err());
        assert!(gc_tail_bound(2.0, -1.0).is_err());
    }

    #[test]
    fn moments_of_supported_laws() {
        let zero = InnovationLaw::standard(LawKind::Zero, 2).unwrap();
        let rep = validate_moments(&zero, 1000, StreamKey::new(1)).unwrap();
        assert!(rep.mean_ok);
        assert!(!rep.covariance_ok);
        assert!(rep.mean.iter().all(|&m| m == 0.0));

        let n = 1_000_000;
        let rad = InnovationLaw::standard(LawKind::Rademacher, 1).unwrap();
        let rep = validate_moments(&rad, n, StreamKey::new(2)).unwrap();
        assert!(rep.passed());
        assert!(rep.mean[0].abs() < 0.005 && (rep.covariance[0] - 1.0).abs() < 0.005);

        let g = InnovationLaw::standard(LawKind::Gaussian, 2).unwrap();
        let rep = validate_moments(&g, n, StreamKey::new(3)).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!((rep.covariance[1]).abs() < 0.005 && (rep.covariance[3] - 1.0).abs() < 0.005);

        assert!(validate_moments(&g, 99, StreamKey::new(3)).is_err());
    }

    proptest! {
        #[test]
        fn tail_bound_monotone(alpha in 0.01f64..100.0, r in 0.001f64..10.0, dr in 0.001f64..1.0, da in 0.01f64..10.0) {
            let b = gc_tail_bound(alpha, r).unwrap();
            prop_assert!(gc_tail_bound(alpha, r + dr).unwrap() <= b);
            prop_assert!(gc_tail_bound(alpha + da, r).unwrap() >= b);
            prop_assert_eq!(gc_tail_bound(alpha, 0.0).unwrap(), 1.0);
        }
    }
}
