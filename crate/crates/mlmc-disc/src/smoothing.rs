//! Mollifier kernels for explicit payoff smoothing.
//!
//! A kernel is a function `g` rising from 0 at minus infinity to 1 at plus
//! infinity; the smoothed Heaviside is `H_delta(x) = g(x / delta)`. The
//! moment coefficients `a_k = integral of x^(k-1) (g(x) - H(x))` control the
//! smoothing bias expansion: antisymmetric kernels have `a_1 = a_3 = 0`, and
//! mixing Gaussian CDFs of different scales can cancel `a_2` as well, pushing
//! the bias to fourth order in `delta`.

use crate::math::normal_cdf;
use crate::quad::{integrate_real_line, QuadError};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SmoothingError {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("divergent moment: {0}")]
    DivergentMoment(String),
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("quadrature accuracy: {0}")]
    Accuracy(String),
}

impl From<QuadError> for SmoothingError {
    fn from(e: QuadError) -> Self {
        SmoothingError::Accuracy(e.to_string())
    }
}

/// Functional form of the mollifier `g`.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelShape {
    /// `g(x) = sum_i c_i Phi(s_i x)` with weights summing to 1.
    GaussianMix(Vec<(f64, f64)>),
    /// One-sided piecewise-linear ramp: 0 below 0, `x` on [0, 1], 1 above.
    Ramp,
}

/// A mollifier together with its smoothing width.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingKernel {
    shape: KernelShape,
    delta: f64,
}

impl SmoothingKernel {
    /// Plain Gaussian kernel `g = Phi`.
    pub fn gaussian(delta: f64) -> Result<Self, SmoothingError> {
        Self::gaussian_mix(vec![(1.0, 1.0)], delta)
    }

    /// Mixture of Gaussian CDFs `(weight, scale)`; weights must sum to 1 and
    /// scales must be positive.
    pub fn gaussian_mix(basis: Vec<(f64, f64)>, delta: f64) -> Result<Self, SmoothingError> {
        if !(delta > 0.0) {
            return Err(SmoothingError::InvalidKernel(format!(
                "delta must be positive, got {delta}"
            )));
        }
        if basis.is_empty() {
            return Err(SmoothingError::InvalidKernel("empty basis".to_string()));
        }
        let sum: f64 = basis.iter().map(|&(c, _)| c).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SmoothingError::InvalidKernel(format!(
                "weights must sum to 1, got {sum}"
            )));
        }
        if basis.iter().any(|&(_, s)| !(s > 0.0)) {
            return Err(SmoothingError::InvalidKernel(
                "scales must be positive".to_string(),
            ));
        }
        Ok(SmoothingKernel {
            shape: KernelShape::GaussianMix(basis),
            delta,
        })
    }

    /// One-sided ramp reaching 1 at width `delta`.
    pub fn ramp(delta: f64) -> Result<Self, SmoothingError> {
        if !(delta > 0.0) {
            return Err(SmoothingError::InvalidKernel(format!(
                "delta must be positive, got {delta}"
            )));
        }
        Ok(SmoothingKernel {
            shape: KernelShape::Ramp,
            delta,
        })
    }

    /// Gaussian mixture over `scales` with weights chosen by
    /// [`solve_a2_cancellation`], so the quadratic bias term vanishes.
    pub fn a2_cancelled(scales: &[f64], delta: f64) -> Result<Self, SmoothingError> {
        let weights = solve_a2_cancellation(scales)?;
        Self::gaussian_mix(weights.into_iter().zip(scales.iter().copied()).collect(), delta)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn shape(&self) -> &KernelShape {
        &self.shape
    }

    /// The mollifier itself.
    pub fn g(&self, x: f64) -> f64 {
        match &self.shape {
            KernelShape::GaussianMix(basis) => {
                basis.iter().map(|&(c, s)| c * normal_cdf(s * x)).sum()
            }
            KernelShape::Ramp => x.clamp(0.0, 1.0),
        }
    }

    /// Smoothed Heaviside `H_delta(x) = g(x / delta)`.
    pub fn eval_hdelta(&self, x: f64) -> f64 {
        self.g(x / self.delta)
    }
}

fn heaviside(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Moment coefficient `a_k = integral x^(k-1) (g(x) - H(x)) dx`, `k` in 1..=4,
/// by adaptive quadrature with absolute error below 1e-8.
pub fn moment_coefficient(kernel: &SmoothingKernel, k: u32) -> Result<f64, SmoothingError> {
    if !(1..=4).contains(&k) {
        return Err(SmoothingError::InvalidKernel(format!(
            "moment order must be in 1..=4, got {k}"
        )));
    }
    if let KernelShape::GaussianMix(basis) = &kernel.shape {
        // A weight sum away from 1 leaves g - H non-vanishing at infinity.
        let sum: f64 = basis.iter().map(|&(c, _)| c).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SmoothingError::DivergentMoment(format!(
                "g(+inf) = {sum} != 1; moment integrand does not decay"
            )));
        }
    }
    let g = |x: f64| kernel.g(x);
    let p = (k - 1) as i32;
    Ok(integrate_real_line(
        move |x| x.powi(p) * (g(x) - heaviside(x)),
        1e-10,
    )?)
}

/// Least-norm weights `c_i` with `sum c_i = 1` and `sum c_i a2(s_i) = 0` for
/// Gaussian CDF scales `s_i`.
///
/// Needs at least two distinct scales; identical scales make the constraint
/// system singular.
pub fn solve_a2_cancellation(scales: &[f64]) -> Result<Vec<f64>, SmoothingError> {
    if scales.len() < 2 {
        return Err(SmoothingError::NoSolution(
            "need at least two scales".to_string(),
        ));
    }
    if scales.iter().any(|&s| !(s > 0.0)) {
        return Err(SmoothingError::InvalidKernel(
            "scales must be positive".to_string(),
        ));
    }
    // a2 of a single Phi(s x) component, by the crate's own quadrature.
    let mut a2 = Vec::with_capacity(scales.len());
    for &s in scales {
        let single = SmoothingKernel::gaussian_mix(vec![(1.0, s)], 1.0)?;
        a2.push(moment_coefficient(&single, 2)?);
    }
    // Least-norm solution of A c = b with rows (1 ... 1) and (a2_1 ... a2_m):
    // c = A^T (A A^T)^{-1} b, b = (1, 0).
    let m = scales.len() as f64;
    let sa: f64 = a2.iter().sum();
    let saa: f64 = a2.iter().map(|v| v * v).sum();
    let det = m * saa - sa * sa;
    if det.abs() < 1e-12 * (m * saa).max(1.0) {
        return Err(SmoothingError::NoSolution(
            "identical scales give a singular constraint system".to_string(),
        ));
    }
    // Solve (A A^T) lambda = b.
    let l0 = saa / det;
    let l1 = -sa / det;
    Ok(a2.iter().map(|&ai| l0 + l1 * ai).collect())
}

/// Exact smoothing bias `integral (H_delta(s - strike) - H(s - strike)) rho(s) ds`
/// by quadrature, used to validate the asymptotic bias expansion.
pub fn bias_oracle<F: Fn(f64) -> f64>(
    kernel: &SmoothingKernel,
    density: F,
    strike: f64,
) -> Result<f64, SmoothingError> {
    let delta = kernel.delta;
    // Substituting x = (s - strike)/delta turns the integrand into
    // delta * (g(x) - H(x)) * rho(strike + x delta), which decays like g - H.
    let g = |x: f64| kernel.g(x);
    let inner = integrate_real_line(
        move |x| (g(x) - heaviside(x)) * density(strike + x * delta),
        1e-9 / delta.min(1.0),
    )?;
    Ok(delta * inner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{normal_pdf, normal_cdf};

    #[test]
    fn hdelta_trivial_values() {
        let phi = SmoothingKernel::gaussian(1.0).unwrap();
        assert!((phi.eval_hdelta(0.0) - 0.5).abs() < 1e-15);
        assert!((phi.eval_hdelta(0.15) - 0.55962).abs() < 1e-5);
        let ramp = SmoothingKernel::ramp(0.3).unwrap();
        assert_eq!(ramp.eval_hdelta(0.3), 1.0);
        assert_eq!(ramp.eval_hdelta(0.0), 0.0);
        assert_eq!(ramp.eval_hdelta(0.15), 0.5);
    }

    #[test]
    fn gaussian_moments_match_closed_forms() {
        let phi = SmoothingKernel::gaussian(1.0).unwrap();
        // Antisymmetry: a1 = a3 = 0.
        assert!(moment_coefficient(&phi, 1).unwrap().abs() < 1e-8);
        assert!(moment_coefficient(&phi, 3).unwrap().abs() < 1e-8);
        // a2 = 2 * integral_0^inf x (Phi(x) - 1) dx = -1/2.
        let a2 = moment_coefficient(&phi, 2).unwrap();
        assert!((a2 + 0.5).abs() < 1e-8, "a2 = {a2}");
        // Scaling identity: a_k(g(s x)) = a_k(g)/s^k.
        let phi2 = SmoothingKernel::gaussian_mix(vec![(1.0, 2.0)], 1.0).unwrap();
        let a2s = moment_coefficient(&phi2, 2).unwrap();
        assert!((a2s + 0.125).abs() < 1e-8, "a2(s=2) = {a2s}");
        let phi4 = SmoothingKernel::gaussian_mix(vec![(1.0, 4.0)], 1.0).unwrap();
        for k in 1..=4 {
            let base = moment_coefficient(&phi, k).unwrap();
            let scaled = moment_coefficient(&phi4, k).unwrap();
            assert!(
                (scaled - base / 4f64.powi(k as i32)).abs() < 1e-7,
                "k={k}: {scaled} vs {base}"
            );
        }
    }

    #[test]
    fn ramp_moments_match_closed_forms() {
        let ramp = SmoothingKernel::ramp(1.0).unwrap();
        // integral_0^1 x^(k-1) (x - 1) dx = 1/(k+1) - 1/k.
        for k in 1..=4u32 {
            let expect = 1.0 / (k as f64 + 1.0) - 1.0 / k as f64;
            let got = moment_coefficient(&ramp, k).unwrap();
            assert!((got - expect).abs() < 1e-8, "k={k}: {got} vs {expect}");
        }
    }

    #[test]
    fn moment_rejects_non_decaying_kernel() {
        let bad = SmoothingKernel {
            shape: KernelShape::GaussianMix(vec![(0.7, 1.0)]),
            delta: 1.0,
        };
        assert!(matches!(
            moment_coefficient(&bad, 2),
            Err(SmoothingError::DivergentMoment(_))
        ));
    }

    #[test]
    fn a2_cancellation_two_scales() {
        let w = solve_a2_cancellation(&[1.0, 2.0]).unwrap();
        assert!((w[0] + 1.0 / 3.0).abs() < 1e-7, "w0 = {}", w[0]);
        assert!((w[1] - 4.0 / 3.0).abs() < 1e-7, "w1 = {}", w[1]);
        let kernel = SmoothingKernel::a2_cancelled(&[1.0, 2.0], 1.0).unwrap();
        for k in 1..=3 {
            let a = moment_coefficient(&kernel, k).unwrap();
            assert!(a.abs() < 1e-7, "a{k} = {a}");
        }
        // Fourth moment must not vanish: the error really is fourth order.
        let a4 = moment_coefficient(&kernel, 4).unwrap();
        assert!((a4 - 3.0 / 16.0).abs() < 1e-6, "a4 = {a4}");
    }

    #[test]
    fn a2_cancellation_rejects_identical_scales() {
        assert!(matches!(
            solve_a2_cancellation(&[1.0, 1.0]),
            Err(SmoothingError::NoSolution(_))
        ));
        assert!(solve_a2_cancellation(&[1.0]).is_err());
    }

    #[test]
    fn a2_cancellation_least_norm_three_scales() {
        let scales = [1.0, 2.0, 4.0];
        let w = solve_a2_cancellation(&scales).unwrap();
        let sum: f64 = w.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        let a2: f64 = w
            .iter()
            .zip(&scales)
            .map(|(&c, &s)| c * (-0.5 / (s * s)))
            .sum();
        assert!(a2.abs() < 1e-7, "a2 = {a2}");
    }

    #[test]
    fn bias_oracle_symmetry_and_expansion() {
        let phi = SmoothingKernel::gaussian(0.1).unwrap();
        // Odd integrand around K = 0 for symmetric rho: zero bias.
        let b0 = bias_oracle(&phi, normal_pdf, 0.0).unwrap();
        assert!(b0.abs() < 1e-9, "b0 = {b0}");
        // K = 0.5: leading term a2 rho'(K) delta^2 = 8.802e-4.
        let b = bias_oracle(&phi, normal_pdf, 0.5).unwrap();
        let expansion = -0.5 * (-0.5 * normal_pdf(0.5)) * 0.01;
        assert!((expansion - 8.802e-4).abs() < 1e-6);
        assert!(
            (b - expansion).abs() < 0.1 * expansion.abs(),
            "oracle {b} vs expansion {expansion}"
        );
    }

    #[test]
    fn ramp_bias_shrinks_monotonically() {
        // Monotone density over the ramp support: bias decreases with delta.
        let mut last = f64::INFINITY;
        for &d in &[0.4, 0.2, 0.1, 0.05] {
            let ramp = SmoothingKernel::ramp(d).unwrap();
            let b = bias_oracle(&ramp, normal_pdf, 0.5).unwrap().abs();
            assert!(b < last, "bias {b} at delta {d} not below {last}");
            last = b;
        }
    }

    #[test]
    fn kernel_limits() {
        let phi = SmoothingKernel::gaussian(1.0).unwrap();
        assert!(phi.g(-40.0).abs() < 1e-300);
        assert!((phi.g(40.0) - 1.0).abs() < 1e-15);
        assert!((phi.g(0.15) - normal_cdf(0.15)).abs() < 1e-15);
    }
}
