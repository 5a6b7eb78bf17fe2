//! Level estimators for discontinuous payoffs of SDE terminal values.
//!
//! All estimators produce correction samples for the digital payoff
//! `H(S_T - K)` (the standard coupling also handles Lipschitz payoffs).
//! Beyond the plain coupled difference they implement the variance-reduction
//! devices that restore useful level-variance decay:
//!
//! * smoothing of the Heaviside through a mollifier kernel,
//! * the analytic conditional expectation of an Euler final step,
//! * a change of measure drawing one terminal value from a common Gaussian
//!   and reweighting fine and coarse paths by Radon-Nikodym derivatives,
//! * splitting of the final timestep into independent continuations,
//! * branching repeated splitting at dyadic times for Euler paths,
//! * adaptive timestep refinement near the strike via Brownian bridges.

use crate::math::{normal_cdf, normal_pdf};
use crate::mlmc::{CorrectionSample, LevelEstimator};
use crate::rng::{GaussianStream, StreamKey};
use crate::sde::{
    refine_once, simulate_coupled, simulate_coupled_trunk, step, CoupledPathState, CoupledTrunk,
    RecordedPath, Scheme, Sde,
};
use crate::smoothing::SmoothingKernel;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("degenerate diffusion: b({state}) = 0 at the conditioning state")]
    DegenerateDiffusion { state: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Payoff applied to the terminal value.
#[derive(Clone)]
pub enum PayoffKind {
    /// `H(x - K)`, worth 1 when the terminal value is at or above the strike.
    DigitalCall,
    /// `max(x - K, 0)`.
    Call,
    /// `max(K - x, 0)`.
    Put,
    Custom(std::sync::Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for PayoffKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PayoffKind::DigitalCall => write!(f, "DigitalCall"),
            PayoffKind::Call => write!(f, "Call"),
            PayoffKind::Put => write!(f, "Put"),
            PayoffKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Payoff {
    pub kind: PayoffKind,
    pub strike: f64,
}

impl Payoff {
    pub fn digital_call(strike: f64) -> Self {
        Payoff {
            kind: PayoffKind::DigitalCall,
            strike,
        }
    }

    pub fn call(strike: f64) -> Self {
        Payoff {
            kind: PayoffKind::Call,
            strike,
        }
    }

    pub fn put(strike: f64) -> Self {
        Payoff {
            kind: PayoffKind::Put,
            strike,
        }
    }

    pub fn is_digital(&self) -> bool {
        matches!(self.kind, PayoffKind::DigitalCall)
    }

    /// Payoff value at terminal state `x`. The Heaviside convention is
    /// `H(0) = 1`.
    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            PayoffKind::DigitalCall => {
                if x >= self.strike {
                    1.0
                } else {
                    0.0
                }
            }
            PayoffKind::Call => (x - self.strike).max(0.0),
            PayoffKind::Put => (self.strike - x).max(0.0),
            PayoffKind::Custom(f) => f(x),
        }
    }
}

/// Gaussian law of a terminal value conditional on the penultimate state.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ConditionalLaw {
    mean: f64,
    sd: f64,
}

/// Conditional law of the fine terminal given the fine penultimate state:
/// one Euler step, so `N(S + a(S) h, b(S)^2 h)`.
fn fine_law<M: Sde + ?Sized>(
    model: &M,
    state: &CoupledPathState,
) -> Result<ConditionalLaw, EstimatorError> {
    let s = state.fine_penultimate;
    let b = model.diffusion(s);
    if b == 0.0 {
        return Err(EstimatorError::DegenerateDiffusion { state: s });
    }
    Ok(ConditionalLaw {
        mean: s + model.drift(s) * state.h_fine,
        sd: b.abs() * state.h_fine.sqrt(),
    })
}

/// Conditional law of the coarse terminal given the coarse penultimate state
/// and the second-to-last fine increment: only the final fine increment stays
/// random, so the standard deviation uses `sqrt(h_fine)`.
fn coarse_law<M: Sde + ?Sized>(
    model: &M,
    state: &CoupledPathState,
) -> Result<Option<ConditionalLaw>, EstimatorError> {
    let (Some(s), Some(h_c), Some(dw_prev)) = (
        state.coarse_penultimate,
        state.h_coarse,
        state.dw_second_last,
    ) else {
        return Ok(None);
    };
    let b = model.diffusion(s);
    if b == 0.0 {
        return Err(EstimatorError::DegenerateDiffusion { state: s });
    }
    Ok(Some(ConditionalLaw {
        mean: s + model.drift(s) * h_c + b * dw_prev,
        sd: b.abs() * state.h_fine.sqrt(),
    }))
}

/// Common Gaussian measure used by the change-of-measure estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommonMeasure {
    pub mu: f64,
    pub sigma: f64,
}

impl CommonMeasure {
    /// Midpoint of the fine/coarse conditional means with the larger of the
    /// two standard deviations, so the common law dominates both.
    fn bracketing(fine: ConditionalLaw, coarse: ConditionalLaw) -> Self {
        CommonMeasure {
            mu: 0.5 * (fine.mean + coarse.mean),
            sigma: fine.sd.max(coarse.sd),
        }
    }
}

/// Standard coupled correction: `f(fine) - f(coarse)`, with the coarse part
/// zero on level 0.
pub fn y_standard(state: &CoupledPathState, payoff: &Payoff) -> CorrectionSample {
    let fine = payoff.eval(state.fine_terminal);
    let coarse = state
        .coarse_terminal
        .map(|s| payoff.eval(s))
        .unwrap_or(0.0);
    CorrectionSample::coupled(fine, coarse, state.cost)
}

/// Standard correction with the Heaviside replaced by the smoothed
/// `H_delta(x - K)`.
pub fn y_smoothed(
    state: &CoupledPathState,
    payoff: &Payoff,
    kernel: &SmoothingKernel,
) -> Result<CorrectionSample, EstimatorError> {
    if !payoff.is_digital() {
        return Err(EstimatorError::InvalidInput(
            "smoothed estimator needs a digital payoff".to_string(),
        ));
    }
    let k = payoff.strike;
    let fine = kernel.eval_hdelta(state.fine_terminal - k);
    let coarse = state
        .coarse_terminal
        .map(|s| kernel.eval_hdelta(s - k))
        .unwrap_or(0.0);
    Ok(CorrectionSample::coupled(fine, coarse, state.cost))
}

/// Conditional expectation of the digital payoff over the final (Euler)
/// timestep.
///
/// Fine: `Phi((S + a(S) h - K) / (b(S) sqrt(h)))` at the fine penultimate
/// state. Coarse: the same with the coarse step drift over `h_{l-1}` plus the
/// known `b(S) dW_{N-1}` contribution in the numerator, and `sqrt(h_l)` in
/// the denominator since only `dW_N` remains random.
pub fn y_conditional_expectation<M: Sde + ?Sized>(
    state: &CoupledPathState,
    model: &M,
    payoff: &Payoff,
) -> Result<CorrectionSample, EstimatorError> {
    if !payoff.is_digital() {
        return Err(EstimatorError::InvalidInput(
            "conditional expectation needs a digital payoff".to_string(),
        ));
    }
    let k = payoff.strike;
    let lf = fine_law(model, state)?;
    let fine = normal_cdf((lf.mean - k) / lf.sd);
    let coarse = match coarse_law(model, state)? {
        Some(lc) => normal_cdf((lc.mean - k) / lc.sd),
        None => 0.0,
    };
    Ok(CorrectionSample::coupled(fine, coarse, state.cost))
}

/// Gaussian density ratio `dN(law)/dN(mu, sigma^2)` at `x`.
fn radon_nikodym(x: f64, law: ConditionalLaw, measure: &CommonMeasure) -> f64 {
    let zf = (x - law.mean) / law.sd;
    let zc = (x - measure.mu) / measure.sigma;
    (measure.sigma / law.sd) * (-0.5 * zf * zf + 0.5 * zc * zc).exp()
}

/// Change-of-measure correction for the final timestep.
///
/// Draws one terminal value from the common Gaussian measure, reweights it
/// under the fine and coarse conditional laws and returns the
/// variance-reduced `(f(S_T) - f(mu)) (R_l - R_{l-1})`. The reported fine and
/// coarse parts are `f(S_T) R_l` and `f(S_T) R_{l-1}`, whose means telescope.
pub fn y_change_of_measure<M: Sde + ?Sized>(
    state: &CoupledPathState,
    model: &M,
    payoff: &Payoff,
    stream: &mut GaussianStream,
) -> Result<CorrectionSample, EstimatorError> {
    if !payoff.is_digital() {
        return Err(EstimatorError::InvalidInput(
            "change of measure needs a digital payoff".to_string(),
        ));
    }
    let lf = fine_law(model, state)?;
    let Some(lc) = coarse_law(model, state)? else {
        // Level 0: sample the final step exactly from its conditional law.
        let s_t = lf.mean + lf.sd * stream.next_normal();
        let fine = payoff.eval(s_t);
        return Ok(CorrectionSample::coupled(fine, 0.0, state.cost));
    };
    let measure = CommonMeasure::bracketing(lf, lc);
    let s_t = measure.mu + measure.sigma * stream.next_normal();
    let r_f = radon_nikodym(s_t, lf, &measure);
    let r_c = radon_nikodym(s_t, lc, &measure);
    let f_t = payoff.eval(s_t);
    let value = (f_t - payoff.eval(measure.mu)) * (r_f - r_c);
    Ok(CorrectionSample {
        value,
        fine: f_t * r_f,
        coarse: f_t * r_c,
        cost: state.cost,
    })
}

/// Final-timestep splitting.
///
/// From the common trunk, `m_splits` independent final fine steps are
/// averaged; the coarse estimate reuses the shared `dW_{N-1}` and pairs split
/// `i` of the coarse step with split `i` of the fine step. Cost adds one unit
/// per split to the trunk cost.
pub fn y_split_final<M: Sde + ?Sized>(
    trunk: &CoupledTrunk,
    model: &M,
    payoff: &Payoff,
    m_splits: u64,
    scheme: Scheme,
    stream: &mut GaussianStream,
) -> Result<CorrectionSample, EstimatorError> {
    if m_splits == 0 {
        return Err(EstimatorError::InvalidInput(
            "m_splits must be at least 1".to_string(),
        ));
    }
    if !payoff.is_digital() {
        return Err(EstimatorError::InvalidInput(
            "final-step splitting needs a digital payoff".to_string(),
        ));
    }
    let sqrt_h = trunk.h_fine.sqrt();
    let mut sum_fine = 0.0;
    let mut sum_coarse = 0.0;
    for _ in 0..m_splits {
        let dw = sqrt_h * stream.next_normal();
        let s_f = step(model, trunk.fine_penultimate, dw, trunk.h_fine, scheme);
        let s_c = step(
            model,
            trunk.coarse_penultimate,
            trunk.dw_second_last + dw,
            trunk.h_coarse,
            scheme,
        );
        sum_fine += payoff.eval(s_f);
        sum_coarse += payoff.eval(s_c);
    }
    let m = m_splits as f64;
    Ok(CorrectionSample::coupled(
        sum_fine / m,
        sum_coarse / m,
        trunk.cost + m,
    ))
}

/// Branching repeated splitting for Euler paths.
///
/// A coupled pair runs to `T/2`, then splits into two independent
/// continuations at each time `T (1 - 2^-k)`, `k = 1..l-1`; the final split
/// leaves one coarse timestep. The correction is the average of
/// `H(fine) - H(coarse)` over the `2^(l-1)` leaves; cost counts every fine
/// step simulated in the tree.
pub fn y_branching_split<M: Sde + ?Sized>(
    model: &M,
    payoff: &Payoff,
    level: usize,
    scheme: Scheme,
    key: &StreamKey,
) -> CorrectionSample {
    if level == 0 {
        // Single uncoupled fine path.
        let mut stream = GaussianStream::new(key);
        let t = model.terminal_time();
        let dw = t.sqrt() * stream.next_normal();
        let s = step(model, model.initial_value(), dw, t, scheme);
        return CorrectionSample::coupled(payoff.eval(s), 0.0, 1.0);
    }
    let n_fine = 1usize << level;
    let h_fine = model.terminal_time() / n_fine as f64;
    let h_coarse = 2.0 * h_fine;
    let s0 = model.initial_value();
    let (sum_f, sum_c, leaves, steps) = branch_node(
        model, payoff, scheme, key, s0, s0, n_fine, h_fine, h_coarse,
    );
    let l = leaves as f64;
    CorrectionSample::coupled(sum_f / l, sum_c / l, steps as f64)
}

/// Simulate one tree node: advance the coupled pair over the node's segment,
/// then either split into two derived-stream children or evaluate the leaf.
///
/// `remaining` is the number of fine steps to the terminal time; a node
/// splits halfway through its remainder while more than one coarse timestep
/// is left.
#[allow(clippy::too_many_arguments)]
fn branch_node<M: Sde + ?Sized>(
    model: &M,
    payoff: &Payoff,
    scheme: Scheme,
    key: &StreamKey,
    mut s_f: f64,
    mut s_c: f64,
    remaining: usize,
    h_fine: f64,
    h_coarse: f64,
) -> (f64, f64, u64, u64) {
    let seg = if remaining > 2 { remaining / 2 } else { remaining };
    let sqrt_h = h_fine.sqrt();
    let mut stream = GaussianStream::new(key);
    let mut pair = 0.0;
    for n in 0..seg {
        let dw = sqrt_h * stream.next_normal();
        s_f = step(model, s_f, dw, h_fine, scheme);
        if n % 2 == 0 {
            pair = dw;
        } else {
            pair += dw;
            s_c = step(model, s_c, pair, h_coarse, scheme);
        }
    }
    if seg == remaining {
        return (
            payoff.eval(s_f),
            payoff.eval(s_c),
            1,
            seg as u64,
        );
    }
    let left = branch_node(
        model,
        payoff,
        scheme,
        &key.derive(1),
        s_f,
        s_c,
        remaining - seg,
        h_fine,
        h_coarse,
    );
    let right = branch_node(
        model,
        payoff,
        scheme,
        &key.derive(2),
        s_f,
        s_c,
        remaining - seg,
        h_fine,
        h_coarse,
    );
    (
        left.0 + right.0,
        left.1 + right.1,
        left.2 + right.2,
        seg as u64 + left.3 + right.3,
    )
}

/// Adaptive-timestep correction for Euler paths.
///
/// The coupled pair starts at `h = T 2^-l`. While the fine terminal sits
/// within `c_adapt * b(S) * sqrt(h)` of the strike (a diffusion-scaled
/// strong-error proxy) and `h` is above `T 4^-l`, the Brownian path is
/// bisected with bridge midpoints and both paths re-simulated at the finer
/// resolution. The digital correction is evaluated at the final resolution;
/// cost counts the fine steps of every (re-)simulation.
pub fn y_adaptive_timestep<M: Sde + ?Sized>(
    model: &M,
    payoff: &Payoff,
    level: usize,
    scheme: Scheme,
    key: &StreamKey,
    c_adapt: f64,
) -> CorrectionSample {
    assert!(level >= 1, "adaptive timestep corrections need level >= 1");
    let n = 1usize << level;
    let t = model.terminal_time();
    let h0 = t / n as f64;
    let h_min = t / (1u64 << (2 * level)) as f64;
    let k = payoff.strike;

    let mut stream = GaussianStream::new(key);
    let mut path = RecordedPath::sample(n, h0, &mut stream);
    let mut cost = n as f64;
    let mut fine_t = path.terminal(model, scheme);
    loop {
        let h = path.h();
        let band = c_adapt * model.diffusion(fine_t).abs() * h.sqrt();
        if (fine_t - k).abs() > band || h <= h_min * (1.0 + 1e-12) {
            break;
        }
        path = refine_once(&path, &mut stream);
        fine_t = path.terminal(model, scheme);
        cost += path.n_steps() as f64;
    }
    let coarse_t = path.coarsened().terminal(model, scheme);
    CorrectionSample::coupled(payoff.eval(fine_t), payoff.eval(coarse_t), cost)
}

/// Rule mapping the level to the number of final-step splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MSplitsRule {
    /// `ceil(h_l^{-1/2})` splits.
    Sqrt,
    /// `h_l^{-1}` splits.
    Linear,
}

impl MSplitsRule {
    pub fn m_splits(&self, h_fine: f64) -> u64 {
        let m = match self {
            MSplitsRule::Sqrt => (1.0 / h_fine.sqrt()).ceil(),
            MSplitsRule::Linear => (1.0 / h_fine).round(),
        };
        (m as u64).max(1)
    }
}

/// Estimator family selector with its per-family parameters.
#[derive(Debug, Clone)]
pub enum EstimatorFamily {
    Standard,
    Smoothed(SmoothingKernel),
    ConditionalExpectation,
    ChangeOfMeasure,
    SplitFinal(MSplitsRule),
    Branching,
    AdaptiveTimestep { c_adapt: f64 },
}

/// A complete path-payoff level estimator: model, payoff, scheme and family.
///
/// Constructed through [`PathEstimator::new`], which validates the
/// family/payoff/scheme combination so that sampling itself cannot fail.
#[derive(Debug, Clone)]
pub struct PathEstimator<M: Sde> {
    model: M,
    payoff: Payoff,
    scheme: Scheme,
    n0_steps: usize,
    family: EstimatorFamily,
}

impl<M: Sde> PathEstimator<M> {
    pub fn new(
        model: M,
        payoff: Payoff,
        scheme: Scheme,
        n0_steps: usize,
        family: EstimatorFamily,
    ) -> Result<Self, EstimatorError> {
        if n0_steps == 0 {
            return Err(EstimatorError::InvalidInput(
                "n0_steps must be at least 1".to_string(),
            ));
        }
        let needs_digital = !matches!(family, EstimatorFamily::Standard);
        if needs_digital && !payoff.is_digital() {
            return Err(EstimatorError::InvalidInput(format!(
                "{family:?} requires the digital payoff"
            )));
        }
        if matches!(
            family,
            EstimatorFamily::Branching | EstimatorFamily::AdaptiveTimestep { .. }
        ) {
            if scheme != Scheme::Euler {
                return Err(EstimatorError::InvalidInput(format!(
                    "{family:?} is defined for the Euler scheme"
                )));
            }
            if n0_steps != 1 {
                return Err(EstimatorError::InvalidInput(format!(
                    "{family:?} uses the dyadic grid n0_steps = 1"
                )));
            }
        }
        Ok(PathEstimator {
            model,
            payoff,
            scheme,
            n0_steps,
            family,
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn payoff(&self) -> &Payoff {
        &self.payoff
    }

    fn h_fine(&self, level: usize) -> f64 {
        self.model.terminal_time() / (self.n0_steps << level) as f64
    }
}

impl<M: Sde> LevelEstimator for PathEstimator<M> {
    fn sample(&self, level: usize, key: &StreamKey) -> CorrectionSample {
        match &self.family {
            EstimatorFamily::Standard => {
                let mut stream = GaussianStream::new(key);
                let st =
                    simulate_coupled(&self.model, level, self.n0_steps, self.scheme, &mut stream);
                y_standard(&st, &self.payoff)
            }
            EstimatorFamily::Smoothed(kernel) => {
                let mut stream = GaussianStream::new(key);
                let st =
                    simulate_coupled(&self.model, level, self.n0_steps, self.scheme, &mut stream);
                y_smoothed(&st, &self.payoff, kernel).expect("validated digital payoff")
            }
            EstimatorFamily::ConditionalExpectation => {
                let mut stream = GaussianStream::new(key);
                let st =
                    simulate_coupled(&self.model, level, self.n0_steps, self.scheme, &mut stream);
                y_conditional_expectation(&st, &self.model, &self.payoff)
                    .expect("validated digital payoff; diffusion must stay non-zero")
            }
            EstimatorFamily::ChangeOfMeasure => {
                let mut stream = GaussianStream::new(key);
                let st =
                    simulate_coupled(&self.model, level, self.n0_steps, self.scheme, &mut stream);
                y_change_of_measure(&st, &self.model, &self.payoff, &mut stream)
                    .expect("validated digital payoff; diffusion must stay non-zero")
            }
            EstimatorFamily::SplitFinal(rule) => {
                let mut stream = GaussianStream::new(key);
                if level == 0 {
                    let st = simulate_coupled(
                        &self.model,
                        0,
                        self.n0_steps,
                        self.scheme,
                        &mut stream,
                    );
                    return y_standard(&st, &self.payoff);
                }
                let trunk = simulate_coupled_trunk(
                    &self.model,
                    level,
                    self.n0_steps,
                    self.scheme,
                    &mut stream,
                );
                let m = rule.m_splits(self.h_fine(level));
                y_split_final(&trunk, &self.model, &self.payoff, m, self.scheme, &mut stream)
                    .expect("validated digital payoff and m >= 1")
            }
            EstimatorFamily::Branching => {
                y_branching_split(&self.model, &self.payoff, level, self.scheme, key)
            }
            EstimatorFamily::AdaptiveTimestep { c_adapt } => {
                if level == 0 {
                    let mut stream = GaussianStream::new(key);
                    let st = simulate_coupled(
                        &self.model,
                        0,
                        self.n0_steps,
                        self.scheme,
                        &mut stream,
                    );
                    return y_standard(&st, &self.payoff);
                }
                y_adaptive_timestep(&self.model, &self.payoff, level, self.scheme, key, *c_adapt)
            }
        }
    }
}
