//! Scalar SDE models and coupled fine/coarse path simulation.
//!
//! Paths follow `dS = a(S) dt + b(S) dW` under Euler-Maruyama or first-order
//! Milstein stepping. A coupled sample simulates the fine path with timestep
//! `h_l` and the coarse path with `2 h_l` from the same Brownian increments:
//! each coarse increment is the exact pairwise sum of two fine increments.
//! Penultimate states and the last two increments are recorded because the
//! conditional-expectation, change-of-measure and splitting estimators are
//! built from them.

use crate::rng::{brownian_bridge_midpoint, GaussianStream};
use thiserror::Error;

/// Scalar SDE with state-dependent drift and diffusion.
///
/// `diffusion_derivative` is only used by the Milstein correction term; the
/// conditional-expectation style estimators additionally require
/// `diffusion(s) > 0` on the visited domain.
pub trait Sde: Sync {
    fn drift(&self, s: f64) -> f64;
    fn diffusion(&self, s: f64) -> f64;
    fn diffusion_derivative(&self, s: f64) -> f64;
    fn initial_value(&self) -> f64;
    fn terminal_time(&self) -> f64;
}

/// Geometric Brownian motion `dS = r S dt + sigma S dW`.
///
/// The canonical test model: its terminal value is lognormal, so digital and
/// call values have closed forms to test against.
#[derive(Debug, Clone, Copy)]
pub struct Gbm {
    pub r: f64,
    pub sigma: f64,
    pub s0: f64,
    pub maturity: f64,
}

impl Gbm {
    /// Parameters of the lognormal law of `S_T`: `ln S_T ~ N(mu, sd^2)`.
    pub fn log_terminal_law(&self) -> (f64, f64) {
        let mu = self.s0.ln() + (self.r - 0.5 * self.sigma * self.sigma) * self.maturity;
        (mu, self.sigma * self.maturity.sqrt())
    }

    /// Exact probability that `S_T >= strike`.
    pub fn digital_value(&self, strike: f64) -> f64 {
        let (mu, sd) = self.log_terminal_law();
        crate::math::normal_cdf((mu - strike.ln()) / sd)
    }

    /// Exact undiscounted call expectation `E[max(S_T - strike, 0)]`.
    pub fn call_value(&self, strike: f64) -> f64 {
        let (mu, sd) = self.log_terminal_law();
        let forward = (mu + 0.5 * sd * sd).exp();
        let d1 = (mu - strike.ln()) / sd + sd;
        let d2 = d1 - sd;
        forward * crate::math::normal_cdf(d1) - strike * crate::math::normal_cdf(d2)
    }

    /// Exact CDF of the terminal value.
    pub fn terminal_cdf(&self, x: f64) -> f64 {
        let (mu, sd) = self.log_terminal_law();
        crate::math::lognormal_cdf(x, mu, sd)
    }
}

impl Sde for Gbm {
    fn drift(&self, s: f64) -> f64 {
        self.r * s
    }
    fn diffusion(&self, s: f64) -> f64 {
        self.sigma * s
    }
    fn diffusion_derivative(&self, _s: f64) -> f64 {
        self.sigma
    }
    fn initial_value(&self) -> f64 {
        self.s0
    }
    fn terminal_time(&self) -> f64 {
        self.maturity
    }
}

/// Arithmetic Brownian motion `dS = mu dt + sigma dW`.
///
/// With constant diffusion the coupling is exact and Milstein coincides with
/// Euler, which makes this model useful for degenerate-case tests.
#[derive(Debug, Clone, Copy)]
pub struct ArithmeticBrownianMotion {
    pub mu: f64,
    pub sigma: f64,
    pub s0: f64,
    pub maturity: f64,
}

impl Sde for ArithmeticBrownianMotion {
    fn drift(&self, _s: f64) -> f64 {
        self.mu
    }
    fn diffusion(&self, _s: f64) -> f64 {
        self.sigma
    }
    fn diffusion_derivative(&self, _s: f64) -> f64 {
        0.0
    }
    fn initial_value(&self) -> f64 {
        self.s0
    }
    fn terminal_time(&self) -> f64 {
        self.maturity
    }
}

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Milstein,
}

/// One timestep of the chosen scheme.
#[inline]
pub fn step<M: Sde + ?Sized>(model: &M, s: f64, dw: f64, h: f64, scheme: Scheme) -> f64 {
    let b = model.diffusion(s);
    let mut next = s + model.drift(s) * h + b * dw;
    if scheme == Scheme::Milstein {
        next += 0.5 * b * model.diffusion_derivative(s) * (dw * dw - h);
    }
    next
}

/// Terminal and penultimate data of one coupled fine/coarse path pair.
///
/// For level 0 the coarse fields are absent. `cost` counts fine timesteps.
#[derive(Debug, Clone, Copy)]
pub struct CoupledPathState {
    pub level: usize,
    pub fine_terminal: f64,
    pub coarse_terminal: Option<f64>,
    /// Fine state at `T - h_fine`.
    pub fine_penultimate: f64,
    /// Coarse state at `T - h_coarse`.
    pub coarse_penultimate: Option<f64>,
    /// Final fine Brownian increment.
    pub dw_last: f64,
    /// Second-to-last fine increment; `None` when only one step was taken.
    pub dw_second_last: Option<f64>,
    pub h_fine: f64,
    pub h_coarse: Option<f64>,
    pub cost: f64,
}

/// Simulate a coupled fine/coarse pair to the terminal time.
///
/// The fine path takes `n0_steps * 2^level` steps; for `level >= 1` the
/// coarse path advances once per two fine steps using the exact sum of their
/// increments.
pub fn simulate_coupled<M: Sde + ?Sized>(
    model: &M,
    level: usize,
    n0_steps: usize,
    scheme: Scheme,
    stream: &mut GaussianStream,
) -> CoupledPathState {
    assert!(n0_steps >= 1, "n0_steps must be at least 1");
    let n_fine = n0_steps << level;
    let h_fine = model.terminal_time() / n_fine as f64;
    let sqrt_h = h_fine.sqrt();
    let coarse = level >= 1;
    let h_coarse = 2.0 * h_fine;

    let s0 = model.initial_value();
    let mut s_f = s0;
    let mut s_c = s0;
    let mut fine_pen = s0;
    let mut coarse_pen = s0;
    let mut dw_last = 0.0;
    let mut dw_second_last = None;
    let mut pair = 0.0;

    for n in 0..n_fine {
        let dw = sqrt_h * stream.next_normal();
        if n > 0 {
            dw_second_last = Some(dw_last);
        }
        dw_last = dw;
        fine_pen = s_f;
        s_f = step(model, s_f, dw, h_fine, scheme);
        if coarse {
            if n % 2 == 0 {
                pair = dw;
            } else {
                pair += dw;
                coarse_pen = s_c;
                s_c = step(model, s_c, pair, h_coarse, scheme);
            }
        }
    }

    CoupledPathState {
        level,
        fine_terminal: s_f,
        coarse_terminal: coarse.then_some(s_c),
        fine_penultimate: fine_pen,
        coarse_penultimate: coarse.then_some(coarse_pen),
        dw_last,
        dw_second_last,
        h_fine,
        h_coarse: coarse.then_some(h_coarse),
        cost: n_fine as f64,
    }
}

/// Coupled pair advanced only to the penultimate times: fine to `T - h_l`,
/// coarse to `T - h_{l-1}`, with the shared increment `dW_{N-1}` recorded.
///
/// This is the common trunk for final-timestep splitting; `cost` counts the
/// `n_fine - 1` fine steps simulated.
#[derive(Debug, Clone, Copy)]
pub struct CoupledTrunk {
    pub level: usize,
    pub fine_penultimate: f64,
    pub coarse_penultimate: f64,
    /// Increment of the second-to-last fine step, shared by all splits of the
    /// final coarse step.
    pub dw_second_last: f64,
    pub h_fine: f64,
    pub h_coarse: f64,
    pub cost: f64,
}

/// Simulate the shared trunk of a coupled pair up to the final timestep.
///
/// Requires `level >= 1`; draws exactly the increments a full
/// [`simulate_coupled`] call would use for the first `n_fine - 1` steps.
pub fn simulate_coupled_trunk<M: Sde + ?Sized>(
    model: &M,
    level: usize,
    n0_steps: usize,
    scheme: Scheme,
    stream: &mut GaussianStream,
) -> CoupledTrunk {
    assert!(level >= 1, "trunk simulation needs a coarse path (level >= 1)");
    let n_fine = n0_steps << level;
    let h_fine = model.terminal_time() / n_fine as f64;
    let sqrt_h = h_fine.sqrt();
    let h_coarse = 2.0 * h_fine;

    let s0 = model.initial_value();
    let mut s_f = s0;
    let mut s_c = s0;
    let mut pair = 0.0;
    let mut dw = 0.0;

    // All fine steps but the last; the coarse path completes one step per
    // increment pair and therefore stops at T - h_coarse.
    for n in 0..n_fine - 1 {
        dw = sqrt_h * stream.next_normal();
        s_f = step(model, s_f, dw, h_fine, scheme);
        if n % 2 == 0 {
            pair = dw;
        } else {
            pair += dw;
            s_c = step(model, s_c, pair, h_coarse, scheme);
        }
    }

    CoupledTrunk {
        level,
        fine_penultimate: s_f,
        coarse_penultimate: s_c,
        dw_second_last: dw,
        h_fine,
        h_coarse,
        cost: (n_fine - 1) as f64,
    }
}

/// Errors from path refinement.
#[derive(Debug, Error, PartialEq)]
pub enum RefineError {
    #[error("target step {target_h} is not a power-of-two refinement of {current_h}")]
    InvalidRefinement { current_h: f64, target_h: f64 },
}

/// A Brownian path stored as per-step increments on a uniform grid.
#[derive(Debug, Clone)]
pub struct RecordedPath {
    h: f64,
    increments: Vec<f64>,
}

impl RecordedPath {
    /// Draw a fresh path of `n_steps` increments with timestep `h`.
    pub fn sample(n_steps: usize, h: f64, stream: &mut GaussianStream) -> Self {
        let sqrt_h = h.sqrt();
        let increments = (0..n_steps).map(|_| sqrt_h * stream.next_normal()).collect();
        RecordedPath { h, increments }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn n_steps(&self) -> usize {
        self.increments.len()
    }

    /// Exact sum of increments over pairs: the increments of the same Brownian
    /// path on the grid with doubled step.
    pub fn coarsened(&self) -> RecordedPath {
        assert!(self.increments.len() % 2 == 0, "need an even number of steps");
        RecordedPath {
            h: 2.0 * self.h,
            increments: self
                .increments
                .chunks_exact(2)
                .map(|p| p[0] + p[1])
                .collect(),
        }
    }

    /// Evolve an SDE along the stored increments, returning the terminal value.
    pub fn terminal<M: Sde + ?Sized>(&self, model: &M, scheme: Scheme) -> f64 {
        let mut s = model.initial_value();
        for &dw in &self.increments {
            s = step(model, s, dw, self.h, scheme);
        }
        s
    }
}

/// Halve the timestep of a recorded path once, inserting Brownian-bridge
/// midpoints. The two child increments of every step sum to the parent
/// increment exactly.
pub fn refine_once(path: &RecordedPath, stream: &mut GaussianStream) -> RecordedPath {
    let h = path.h;
    let mut out = Vec::with_capacity(path.increments.len() * 2);
    for &dw in &path.increments {
        // Bridge midpoint relative to the step's left endpoint:
        // W_mid - W_left = dw / 2 + z * sqrt(h / 4).
        let z = stream.next_normal();
        let left = brownian_bridge_midpoint(0.0, dw, 0.0, h, z)
            .expect("positive step size");
        out.push(left);
        out.push(dw - left);
    }
    RecordedPath {
        h: 0.5 * h,
        increments: out,
    }
}

/// Refine a recorded path to `target_h` by repeated bridge bisection and
/// re-simulate the SDE at the finer resolution.
///
/// Returns the refined path; increments over any original interval are
/// preserved exactly, so refining to the same `h` returns an identical path.
pub fn refine_path<M: Sde + ?Sized>(
    _model: &M,
    _scheme: Scheme,
    path: &RecordedPath,
    target_h: f64,
    stream: &mut GaussianStream,
) -> Result<RecordedPath, RefineError> {
    let halvings = refinement_halvings(path.h, target_h)?;
    let mut refined = path.clone();
    for _ in 0..halvings {
        refined = refine_once(&refined, stream);
    }
    Ok(refined)
}

/// Number of halvings from `current_h` down to `target_h`, or an error when
/// the ratio is not a power of two.
pub fn refinement_halvings(current_h: f64, target_h: f64) -> Result<u32, RefineError> {
    let err = RefineError::InvalidRefinement {
        current_h,
        target_h,
    };
    if !(target_h > 0.0) || target_h > current_h * (1.0 + 1e-12) {
        return Err(err);
    }
    let ratio = current_h / target_h;
    let k = ratio.log2().round();
    if k < 0.0 || (2f64.powf(k) - ratio).abs() > 1e-9 * ratio {
        return Err(err);
    }
    Ok(k as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    fn unit_bm() -> ArithmeticBrownianMotion {
        ArithmeticBrownianMotion {
            mu: 0.0,
            sigma: 1.0,
            s0: 0.0,
            maturity: 1.0,
        }
    }

    #[test]
    fn euler_step_pure_diffusion() {
        let m = unit_bm();
        assert_eq!(step(&m, 0.0, 0.3, 0.1, Scheme::Euler), 0.3);
        assert_eq!(step(&m, 0.0, 0.3, 0.7, Scheme::Euler), 0.3);
    }

    #[test]
    fn milstein_equals_euler_for_constant_diffusion() {
        let m = unit_bm();
        for dw in [-0.5, 0.0, 0.4] {
            assert_eq!(
                step(&m, 1.0, dw, 0.25, Scheme::Milstein),
                step(&m, 1.0, dw, 0.25, Scheme::Euler)
            );
        }
    }

    #[test]
    fn milstein_step_gbm_hand_value() {
        let gbm = Gbm {
            r: 0.05,
            sigma: 0.2,
            s0: 1.0,
            maturity: 1.0,
        };
        // 1 + 0.05*0.01 + 0 + 0.5*0.2*0.2*(0 - 0.01) = 1.0003.
        let s = step(&gbm, 1.0, 0.0, 0.01, Scheme::Milstein);
        assert!((s - 1.0003).abs() < 1e-15);
    }

    #[test]
    fn coupled_zero_noise_keeps_initial_value() {
        // Drift-free model with the stream replaced by z = 0 via a trick:
        // use sigma = 0 so increments vanish regardless of the draws.
        let m = ArithmeticBrownianMotion {
            mu: 0.0,
            sigma: 0.0,
            s0: 1.25,
            maturity: 1.0,
        };
        let key = StreamKey::new(3);
        let mut stream = GaussianStream::new(&key);
        let st = simulate_coupled(&m, 3, 1, Scheme::Euler, &mut stream);
        assert_eq!(st.fine_terminal, 1.25);
        assert_eq!(st.coarse_terminal, Some(1.25));
    }

    #[test]
    fn additive_model_couples_exactly() {
        let m = unit_bm();
        let key = StreamKey::new(17).derive(4);
        let mut stream = GaussianStream::new(&key);
        let st = simulate_coupled(&m, 5, 1, Scheme::Euler, &mut stream);
        // Fine terminal - s0 = sum of all increments = coarse terminal - s0.
        let diff = st.fine_terminal - st.coarse_terminal.unwrap();
        assert!(diff.abs() < 1e-12, "coupling gap {diff}");
        assert_eq!(st.cost, 32.0);
        assert_eq!(st.h_coarse, Some(2.0 * st.h_fine));
    }

    #[test]
    fn level_zero_has_no_coarse_fields() {
        let m = unit_bm();
        let mut stream = GaussianStream::new(&StreamKey::new(1));
        let st = simulate_coupled(&m, 0, 1, Scheme::Euler, &mut stream);
        assert!(st.coarse_terminal.is_none());
        assert!(st.coarse_penultimate.is_none());
        assert!(st.dw_second_last.is_none());
        assert_eq!(st.fine_penultimate, 0.0);
        assert_eq!(st.cost, 1.0);
    }

    #[test]
    fn trunk_matches_full_simulation_prefix() {
        let gbm = Gbm {
            r: 0.05,
            sigma: 0.2,
            s0: 1.0,
            maturity: 1.0,
        };
        let key = StreamKey::new(8).derive(2);
        let mut s1 = GaussianStream::new(&key);
        let full = simulate_coupled(&gbm, 4, 1, Scheme::Milstein, &mut s1);
        let mut s2 = GaussianStream::new(&key);
        let trunk = simulate_coupled_trunk(&gbm, 4, 1, Scheme::Milstein, &mut s2);
        assert_eq!(trunk.fine_penultimate.to_bits(), full.fine_penultimate.to_bits());
        assert_eq!(
            trunk.coarse_penultimate.to_bits(),
            full.coarse_penultimate.unwrap().to_bits()
        );
        assert_eq!(
            trunk.dw_second_last.to_bits(),
            full.dw_second_last.unwrap().to_bits()
        );
        assert_eq!(trunk.cost, full.cost - 1.0);
    }

    #[test]
    fn refine_preserves_increment_sums_exactly() {
        let key = StreamKey::new(33);
        let mut stream = GaussianStream::new(&key);
        let path = RecordedPath::sample(8, 0.125, &mut stream);
        let refined = refine_once(&path, &mut stream);
        assert_eq!(refined.n_steps(), 16);
        for (i, &dw) in path.increments().iter().enumerate() {
            let sum = refined.increments()[2 * i] + refined.increments()[2 * i + 1];
            assert_eq!(sum.to_bits(), dw.to_bits());
        }
        // Terminal value of a pure Brownian path is unchanged by refinement
        // (telescoping increments).
        let m = unit_bm();
        let t0 = path.terminal(&m, Scheme::Euler);
        let t1 = refined.terminal(&m, Scheme::Euler);
        assert!((t0 - t1).abs() < 1e-12);
    }

    #[test]
    fn refine_to_same_h_is_identity() {
        let key = StreamKey::new(12);
        let mut stream = GaussianStream::new(&key);
        let path = RecordedPath::sample(4, 0.25, &mut stream);
        let m = unit_bm();
        let same = refine_path(&m, Scheme::Euler, &path, 0.25, &mut stream).unwrap();
        assert_eq!(same.increments(), path.increments());
    }

    #[test]
    fn refine_rejects_non_dyadic_targets() {
        assert!(refinement_halvings(0.25, 0.1).is_err());
        assert!(refinement_halvings(0.25, 0.5).is_err());
        assert_eq!(refinement_halvings(0.25, 0.0625), Ok(2));
    }

    #[test]
    fn coarsened_pairs_sum_exactly() {
        let key = StreamKey::new(2);
        let mut stream = GaussianStream::new(&key);
        let path = RecordedPath::sample(6, 0.5, &mut stream);
        let coarse = path.coarsened();
        assert_eq!(coarse.n_steps(), 3);
        for i in 0..3 {
            let sum = path.increments()[2 * i] + path.increments()[2 * i + 1];
            assert_eq!(coarse.increments()[i].to_bits(), sum.to_bits());
        }
    }
}
