//! Non-asymptotic Gaussian concentration certificates for two stochastic
//! approximation schemes, with the machinery to check them empirically.
//!
//! * [`euler`]: Euler-like discretization of an SDE driven by innovations with
//!   the GC(α) property, and the flow Lipschitz bound.
//! * [`montecarlo`]: Monte-Carlo estimation of `E f(X_T^Δ)` and its two-sided
//!   deviation certificate.
//! * [`robbins_monro`]: the Robbins-Monro recursion, step-schedule algebra,
//!   deviation and bias certificates, and rate regimes.
//! * [`verify`]: tail-frequency reports with Clopper-Pearson envelopes.
//!
//! Randomness comes from counter-based streams ([`rng::StreamKey`]), so every
//! result is bit-reproducible regardless of the number of threads.

pub mod cli;
pub mod config;
pub mod error;
pub mod euler;
pub mod innovations;
pub mod montecarlo;
pub mod numerics;
pub mod par;
pub mod rng;
pub mod robbins_monro;
pub mod scenarios;
pub mod verify;

pub use error::{Error, Result};
