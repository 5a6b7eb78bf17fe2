//! Multilevel Monte Carlo estimators for discontinuous output functionals.
//!
//! Standard MLMC loses most of its advantage when the quantity of interest is
//! a discontinuous function of the simulated state: a digital payoff
//! `H(S_T - K)` of an SDE terminal value, or the probability that a nested
//! conditional expectation crosses a threshold. This crate implements the
//! classical coupled estimator together with the variance-reduction
//! techniques that recover better level-variance decay for such payoffs:
//!
//! * explicit payoff smoothing with mollifier kernels ([`smoothing`]),
//! * analytic conditional expectation of the final timestep ([`estimators`]),
//! * change of measure with Radon-Nikodym reweighting ([`estimators`]),
//! * final-step splitting and branching repeated splitting ([`estimators`]),
//! * adaptive timestep refinement via Brownian bridges ([`estimators`]),
//! * adaptive inner sampling for nested expectations ([`nested`]),
//! * CDF reconstruction through spline smoothing or the parity identity
//!   between call payoffs and the distribution function ([`cdf`]).
//!
//! The [`mlmc`] module houses the generic driver (sample allocation, level
//! extension, rate fits); [`rng`] provides the deterministic splittable
//! streams that make every run replayable bit-for-bit; [`sde`] implements the
//! coupled Euler-Maruyama / Milstein path simulation feeding the estimators.

pub mod cdf;
pub mod estimators;
pub mod math;
pub mod mlmc;
pub mod nested;
pub mod rng;
pub mod sde;
pub mod smoothing;

mod quad;

pub use mlmc::{
    fit_rates, kurtosis, optimal_allocation, run_mlmc, CorrectionSample, LevelEstimator,
    LevelMoments, MlmcConfig, MlmcError, MlmcResult, Rates,
};
pub use rng::{brownian_bridge_midpoint, GaussianStream, StreamKey};
