//! Empirical verification of the concentration certificates.
//!
//! A verification run measures the left-hand side of a certificate, the
//! probability of a deviation of size at least `r`, over many independent
//! replications (or over every equally likely Rademacher innovation pattern),
//! and compares a one-sided Clopper-Pearson upper limit on it with the bound.

use std::fmt::Write as _;

use nalgebra::DVector;
use serde::Serialize;
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::euler::{simulate_terminal, simulate_terminal_with, DiffusionModel, SchemeGrid};
use crate::innovations::{InnovationLaw, LawKind};
use crate::montecarlo::{mc_confidence_radius, mc_deviation_bound, DeviationCertificate, LipschitzFunction};
use crate::numerics::{compensated_sum, normal_sf};
use crate::par;
use crate::rng::StreamKey;
use crate::robbins_monro::{rm_deviation_bound, rm_run_with, rm_terminal, RMProblem, StepSchedule};

/// Exact one-sided upper confidence limit for a binomial proportion after
/// `k` successes in `n` trials: the `p` solving `P(Bin(n, p) <= k) = 1 - confidence`,
/// i.e. the `confidence` quantile of `Beta(k + 1, n - k)`.
pub fn clopper_pearson_upper(k: u64, n: u64, confidence: f64) -> Result<f64> {
    if n == 0 || k > n {
        return Err(Error::domain(format!("need 0 <= k <= n and n >= 1, got k={k}, n={n}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::domain(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    if k == n {
        return Ok(1.0);
    }
    if k == 0 {
        return Ok(-((1.0 - confidence).ln() / n as f64).exp_m1());
    }
    let (a, b) = ((k + 1) as f64, (n - k) as f64);
    // I_p(a, b) is increasing in p; bisect to full double precision.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < confidence {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// `2(1 - Φ(r / scale))`: the two-sided tail of `N(0, scale²)`.
pub fn exact_gaussian_oracle(scale: f64, r: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::domain("scale must be positive"));
    }
    if !(r >= 0.0) {
        return Err(Error::domain("r must be >= 0"));
    }
    Ok(2.0 * normal_sf(r / scale))
}

/// Empirical tail probabilities against a certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub r_grid: Vec<f64>,
    pub empirical_freq: Vec<f64>,
    pub cp_upper: Vec<f64>,
    pub theoretical_bound: Vec<f64>,
    pub exact_oracle: Option<Vec<f64>>,
    /// Replications, or the number of enumerated patterns.
    pub replications: usize,
    pub confidence: f64,
    /// Every innovation pattern was enumerated; frequencies are exact.
    pub enumerated: bool,
    /// Centering used for the deviations (reference mean, or `δ̂_N`).
    pub centering: f64,
    /// Uncertainty of the centering, subtracted from each `r` before counting.
    pub slack: f64,
}

impl TailReport {
    /// `cp_upper <= bound`, per grid point.
    pub fn dominance(&self) -> Vec<bool> {
        self.cp_upper.iter().zip(&self.theoretical_bound).map(|(u, b)| u <= b).collect()
    }

    pub fn all_dominated(&self) -> bool {
        self.dominance().into_iter().all(|d| d)
    }

    /// CSV with columns `r,empirical,cp_upper,bound,exact,dominated`; floats in
    /// shortest round-trip form, `exact` empty when no oracle exists.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,empirical,cp_upper,bound,exact,dominated\n");
        for (i, dominated) in self.dominance().into_iter().enumerate() {
            let exact = self.exact_oracle.as_ref().map(|e| e[i].to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                self.r_grid[i], self.empirical_freq[i], self.cp_upper[i], self.theoretical_bound[i], exact, dominated
            )
            .unwrap();
        }
        out
    }
}

/// How replications are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    MonteCarlo { replications: usize },
    /// All `2^bits` Rademacher patterns, each with probability `2^-bits`.
    Enumerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyOptions {
    pub sampling: Sampling,
    pub confidence: f64,
    pub stream: StreamKey,
}

/// Maximum number of enumerated Rademacher signs.
pub const MAX_ENUMERATION_BITS: usize = 24;

fn validate_grid(r_grid: &[f64]) -> Result<()> {
    if r_grid.is_empty() || r_grid.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
        return Err(Error::domain("r-grid must be a nonempty list of nonnegative reals"));
    }
    Ok(())
}

fn replication_count(opts: &VerifyOptions, bits: usize, law: &InnovationLaw) -> Result<usize> {
    match opts.sampling {
        Sampling::MonteCarlo { replications } if replications >= 100 => Ok(replications),
        Sampling::MonteCarlo { .. } => Err(Error::domain("verification needs at least 100 replications")),
        Sampling::Enumerate if law.kind != LawKind::Rademacher => {
            Err(Error::domain("enumeration mode requires Rademacher innovations"))
        }
        Sampling::Enumerate if bits > MAX_ENUMERATION_BITS => Err(Error::domain(format!(
            "enumeration over {bits} signs exceeds the limit of {MAX_ENUMERATION_BITS}"
        ))),
        Sampling::Enumerate => Ok(1usize << bits),
    }
}

/// Innovation vectors encoded by the bits of `pattern`, starting at bit `offset`.
fn pattern_innovations(pattern: usize, offset: usize, count: usize, dim: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|i| {
            DVector::from_fn(dim, |c, _| {
                if pattern >> (offset + i * dim + c) & 1 == 1 {
                    1.0
                } else {
                    -1.0
                }
            })
        })
        .collect()
}

/// Tail frequencies `#{d_j >= threshold(r)} / R` from sorted deviations.
fn tail_frequencies(sorted: &[f64], thresholds: impl Iterator<Item = f64>) -> Vec<(u64, f64)> {
    let n = sorted.len();
    thresholds
        .map(|t| {
            let k = (n - sorted.partition_point(|d| *d < t)) as u64;
            (k, k as f64 / n as f64)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    r_grid: &[f64],
    mut deviations: Vec<f64>,
    shift: impl Fn(f64) -> f64,
    bounds: Vec<f64>,
    exact: Option<Vec<f64>>,
    opts: &VerifyOptions,
    centering: f64,
    slack: f64,
) -> Result<TailReport> {
    deviations.sort_by(f64::total_cmp);
    let counts = tail_frequencies(&deviations, r_grid.iter().map(|&r| shift(r)));
    let enumerated = matches!(opts.sampling, Sampling::Enumerate);
    let n = deviations.len() as u64;
    let empirical_freq: Vec<f64> = counts.iter().map(|c| c.1).collect();
    let cp_upper = if enumerated {
        empirical_freq.clone()
    } else {
        counts.iter().map(|(k, _)| clopper_pearson_upper(*k, n, opts.confidence)).collect::<Result<_>>()?
    };
    let exact_oracle = if enumerated { Some(empirical_freq.clone()) } else { exact };
    Ok(TailReport {
        r_grid: r_grid.to_vec(),
        empirical_freq,
        cp_upper,
        theoretical_bound: bounds,
        exact_oracle,
        replications: deviations.len(),
        confidence: opts.confidence,
        enumerated,
        centering,
        slack,
    })
}

/// Where the centering `E f(X_T^Δ)` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Reference {
    Exact(f64),
    /// A pilot estimate with `samples` paths; its own certified radius at
    /// level `1 - confidence` becomes slack in the comparison.
    Pilot { samples: usize },
}

/// Tail of `|E_M - E f(X_T^Δ)|` against the Monte-Carlo certificate.
///
/// Replication `j` uses `opts.stream.replication(j)`, its path `p` uses
/// `.path(p)`. In enumeration mode the centering is the exact enumerated mean.
#[allow(clippy::too_many_arguments)]
pub fn verify_mc_bound(
    model: &DiffusionModel,
    grid: &SchemeGrid,
    f: &LipschitzFunction,
    x0: &DVector<f64>,
    law: &InnovationLaw,
    cert: &DeviationCertificate,
    reference: Reference,
    exact_oracle: Option<&(dyn Fn(f64) -> f64 + Sync)>,
    r_grid: &[f64],
    opts: &VerifyOptions,
) -> Result<TailReport> {
    validate_grid(r_grid)?;
    let m = cert.samples;
    let bits = grid.steps * law.dim * m;
    let reps = replication_count(opts, bits, law)?;
    let bounds = r_grid.iter().map(|&r| mc_deviation_bound(cert, r)).collect::<Result<Vec<_>>>()?;

    let estimates = match opts.sampling {
        Sampling::MonteCarlo { .. } => par::try_map_indexed(reps, |j| {
            let rep = opts.stream.replication(j as u64);
            let values = (0..m)
                .map(|p| simulate_terminal(model, grid, x0, rep.path(p as u64), law).map(|x| f.eval(&x)))
                .collect::<Result<Vec<_>>>()?;
            Ok::<f64, Error>(compensated_sum(values) / m as f64)
        })?,
        Sampling::Enumerate => par::try_map_indexed(reps, |pattern| {
            let values = (0..m)
                .map(|p| {
                    let ys = pattern_innovations(pattern, p * grid.steps * law.dim, grid.steps, law.dim);
                    simulate_terminal_with(model, grid, x0, &ys).map(|x| f.eval(&x))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok::<f64, Error>(compensated_sum(values) / m as f64)
        })?,
    };

    let (centering, slack) = match (opts.sampling, reference) {
        (Sampling::Enumerate, _) => (compensated_sum(estimates.iter().copied()) / reps as f64, 0.0),
        (_, Reference::Exact(v)) => (v, 0.0),
        (_, Reference::Pilot { samples }) => {
            if samples == 0 {
                return Err(Error::domain("pilot run needs at least one path"));
            }
            // The pilot draws from a replication index no verification run reaches.
            let pilot = opts.stream.replication(u64::MAX);
            let values = par::try_map_indexed(samples, |p| {
                simulate_terminal(model, grid, x0, pilot.path(p as u64), law).map(|x| f.eval(&x))
            })?;
            let pilot_cert = DeviationCertificate { samples, ..*cert };
            let radius = mc_confidence_radius(&pilot_cert, 1.0 - opts.confidence)?;
            (compensated_sum(values) / samples as f64, radius)
        }
    };

    let deviations: Vec<f64> = estimates.iter().map(|e| (e - centering).abs()).collect();
    let exact = exact_oracle.map(|o| r_grid.iter().map(|&r| o(r)).collect());
    build_report(r_grid, deviations, |r| (r - slack).max(0.0), bounds, exact, opts, centering, slack)
}

/// Tail of `|θ_N - θ*|` beyond `r + δ̂_N` against the Robbins-Monro certificate,
/// with `δ̂_N` the mean deviation over the same replications.
#[allow(clippy::too_many_arguments)]
pub fn verify_rm_bound(
    problem: &RMProblem,
    schedule: &StepSchedule,
    theta0: &DVector<f64>,
    n: usize,
    exact_oracle: Option<&(dyn Fn(f64) -> f64 + Sync)>,
    r_grid: &[f64],
    opts: &VerifyOptions,
) -> Result<TailReport> {
    validate_grid(r_grid)?;
    let target = problem.theta_star.as_ref().ok_or_else(|| {
        Error::domain(format!(
            "problem `{}` has no known target θ*; supply one with RMProblem::with_target",
            problem.name
        ))
    })?;
    if n == 0 {
        return Err(Error::domain("N must be >= 1"));
    }
    let law = &problem.law;
    let reps = replication_count(opts, n * law.dim, law)?;
    let bounds = r_grid
        .iter()
        .map(|&r| rm_deviation_bound(problem, schedule, n, r))
        .collect::<Result<Vec<_>>>()?;

    let deviations = match opts.sampling {
        Sampling::MonteCarlo { .. } => par::try_map_indexed(reps, |j| {
            rm_terminal(problem, schedule, theta0, n, opts.stream.replication(j as u64)).map(|t| (t - target).norm())
        })?,
        Sampling::Enumerate => par::try_map_indexed(reps, |pattern| {
            let ys = pattern_innovations(pattern, 0, n, law.dim);
            rm_run_with(problem, schedule, theta0, &ys, opts.stream.seed).map(|t| (t.terminal() - target).norm())
        })?,
    };
    let (lo, hi) = deviations
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
    let delta_hat = (compensated_sum(deviations.iter().copied()) / reps as f64).clamp(lo, hi);
    let exact = exact_oracle.map(|o| r_grid.iter().map(|&r| o(r)).collect());
    build_report(r_grid, deviations, |r| r + delta_hat, bounds, exact, opts, delta_hat, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Reference upper limit from the binomial CDF summed in log space,
    /// inverted by bisection.
    fn cp_oracle(k: u64, n: u64, confidence: f64) -> f64 {
        let ln_choose = |j: u64| -> f64 {
            (1..=j).map(|i| ((n - j + i) as f64 / i as f64).ln()).sum()
        };
        let cdf = |p: f64| -> f64 {
            (0..=k).map(|j| (ln_choose(j) + j as f64 * p.ln() + (n - j) as f64 * (1.0 - p).ln()).exp()).sum()
        };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) > 1.0 - confidence {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn clopper_pearson_values() {
        assert_eq!(clopper_pearson_upper(100, 100, 0.95).unwrap(), 1.0);
        assert_eq!(clopper_pearson_upper(7, 7, 0.5).unwrap(), 1.0);
        let k0 = clopper_pearson_upper(0, 100, 0.95).unwrap();
        assert_relative_eq!(k0, 1.0 - 0.05f64.powf(0.01), max_relative = 1e-12);
        assert_relative_eq!(k0, 0.029_513_049_607_039_93, max_relative = 1e-12);
        assert!((k0 - cp_oracle(0, 100, 0.95)).abs() < 1e-12);

        let k5 = clopper_pearson_upper(5, 100, 0.95).unwrap();
        assert!(k5 > 0.05 && k5 < 0.12);
        assert!((k5 - cp_oracle(5, 100, 0.95)).abs() < 1e-9, "{k5}");
        assert!((k5 - 0.102_253_377_643_274_5).abs() < 1e-9);

        for (k, n, c) in [(1, 10, 0.9), (37, 200, 0.999), (999, 1000, 0.99), (3, 10_000, 0.999)] {
            let u = clopper_pearson_upper(k, n, c).unwrap();
            assert!((u - cp_oracle(k, n, c)).abs() < 1e-9, "k={k} n={n}");
        }
        assert!(clopper_pearson_upper(5, 4, 0.9).is_err());
        assert!(clopper_pearson_upper(0, 0, 0.9).is_err());
        assert!(clopper_pearson_upper(1, 4, 1.0).is_err());
    }

    #[test]
    fn gaussian_oracle_values() {
        assert_eq!(exact_gaussian_oracle(1.0, 0.0).unwrap(), 1.0);
        let cases = [
            (1.0, 0.317_310_507_862_914_1),
            (10f64.sqrt(), 0.001_565_402_258_002_548_7),
            (5.0, 5.733_031_437_583_878e-7),
            (8.0, 1.244_192_114_854_356_8e-15),
        ];
        for (z, expect) in cases {
            assert_relative_eq!(exact_gaussian_oracle(1.0, z).unwrap(), expect, max_relative = 1e-12);
            assert_relative_eq!(exact_gaussian_oracle(0.5, z / 2.0).unwrap(), expect, max_relative = 1e-12);
        }
        assert!(exact_gaussian_oracle(0.0, 1.0).is_err());
    }

    #[test]
    fn tail_frequencies_monotone() {
        let sorted = [0.0, 0.1, 0.1, 0.5, 2.0];
        let f = tail_frequencies(&sorted, [0.0, 0.1, 0.2, 3.0].into_iter());
        assert_eq!(f.iter().map(|x| x.0).collect::<Vec<_>>(), vec![5, 4, 2, 0]);
    }

    #[test]
    fn csv_layout() {
        let rep = TailReport {
            r_grid: vec![0.0, 0.5],
            empirical_freq: vec![1.0, 0.0],
            cp_upper: vec![1.0, 0.25],
            theoretical_bound: vec![1.0, 0.1],
            exact_oracle: None,
            replications: 100,
            confidence: 0.999,
            enumerated: false,
            centering: 0.0,
            slack: 0.0,
        };
        assert_eq!(rep.to_csv(), "r,empirical,cp_upper,bound,exact,dominated\n0,1,1,1,,true\n0.5,0,0.25,0.1,,false\n");
        assert!(!rep.all_dominated());
    }
}
