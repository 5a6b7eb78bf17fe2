//! Full-distribution estimation.
//!
//! Two constructions of the CDF of an SDE terminal value on a grid of spline
//! points:
//!
//! * **smoothed**: MLMC estimates of `E[H_delta(x_j - S_T)]` interpolated by
//!   a natural cubic spline;
//! * **parity**: MLMC estimates of the Lipschitz payoffs
//!   `E[max(0, x_j - S_T)]`, splined and then differentiated, using the
//!   identity `d/dx E[max(0, x - S_T)] = E[H(x - S_T)]`.
//!
//! One coupled path sample evaluates every grid point, so the per-point
//! estimates share their paths within each level.

use crate::math::linear_fit;
use crate::mlmc::{MlmcConfig, MlmcError, TILE};
use crate::rng::{GaussianStream, StreamKey};
use crate::sde::{simulate_coupled, Scheme, Sde};
use crate::smoothing::SmoothingKernel;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CdfError {
    #[error("insufficient points: cubic splines need at least 4, got {0}")]
    InsufficientPoints(usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Mlmc(#[from] MlmcError),
}

/// Strictly increasing abscissae with per-point estimates and standard errors.
#[derive(Debug, Clone)]
pub struct SplineGrid {
    pub points: Vec<f64>,
    /// `(estimate, standard error)` per point.
    pub values: Vec<(f64, f64)>,
}

impl SplineGrid {
    pub fn new(points: Vec<f64>, values: Vec<(f64, f64)>) -> Result<Self, CdfError> {
        if points.len() < 4 {
            return Err(CdfError::InsufficientPoints(points.len()));
        }
        if points.len() != values.len() {
            return Err(CdfError::InvalidGrid(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(CdfError::InvalidGrid(
                "points must be strictly increasing".to_string(),
            ));
        }
        Ok(SplineGrid { points, values })
    }

    /// Equispaced grid of `n` points over `[lo, hi]` (values unset).
    pub fn equispaced(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, CdfError> {
        if n < 4 {
            return Err(CdfError::InsufficientPoints(n));
        }
        if !(lo < hi) {
            return Err(CdfError::InvalidGrid(format!("empty range [{lo}, {hi}]")));
        }
        let step = (hi - lo) / (n - 1) as f64;
        Ok((0..n).map(|j| lo + j as f64 * step).collect())
    }
}

/// Natural cubic spline: C^2 interpolant with zero second derivative at both
/// ends. Outside the knot range the boundary cubic is extrapolated.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    fn segment(&self, x: f64) -> usize {
        // Binary search for the segment; clamp outside the range.
        match self
            .xs
            .binary_search_by(|v| v.partial_cmp(&x).expect("finite knots"))
        {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.xs.len() - 2),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        (self.ys[i + 1] - self.ys[i]) / h
            + ((3.0 * b * b - 1.0) * self.m[i + 1] - (3.0 * a * a - 1.0) * self.m[i]) * h / 6.0
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    /// Second derivative at knot `i`; zero at both ends by construction.
    pub fn second_derivative_at_knot(&self, i: usize) -> f64 {
        self.m[i]
    }
}

/// Interpolate a grid with a natural cubic spline.
pub fn cubic_spline(grid: &SplineGrid) -> Result<CubicSpline, CdfError> {
    let n = grid.points.len();
    if n < 4 {
        return Err(CdfError::InsufficientPoints(n));
    }
    let xs = grid.points.clone();
    let ys: Vec<f64> = grid.values.iter().map(|&(v, _)| v).collect();

    // Tridiagonal system for interior second derivatives (Thomas algorithm);
    // natural end conditions fix m[0] = m[n-1] = 0.
    let mut m = vec![0.0; n];
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut upper = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    for i in 1..=k {
        let h0 = xs[i] - xs[i - 1];
        let h1 = xs[i + 1] - xs[i];
        diag[i - 1] = (h0 + h1) / 3.0;
        upper[i - 1] = h1 / 6.0;
        rhs[i - 1] = (ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0;
    }
    // Forward sweep: the sub-diagonal at row i is h_i/6 = upper[i-1].
    for i in 1..k {
        let w = upper[i - 1] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    if k > 0 {
        m[k] = rhs[k - 1] / diag[k - 1];
        for i in (1..k).rev() {
            m[i] = (rhs[i - 1] - upper[i - 1] * m[i + 1]) / diag[i - 1];
        }
    }
    Ok(CubicSpline { xs, ys, m })
}

/// Vector-valued level estimator: one sample fills a value per grid point.
trait VectorLevelEstimator: Sync {
    fn dim(&self) -> usize;
    /// Fill `out` with this sample's per-point corrections; returns the cost.
    fn sample_into(&self, level: usize, key: &StreamKey, out: &mut [f64]) -> f64;
}

/// Per-level first and second moment sums for every grid point.
#[derive(Debug, Clone)]
struct VectorMoments {
    n: u64,
    s1: Vec<f64>,
    s2: Vec<f64>,
    cost: f64,
}

impl VectorMoments {
    fn new(dim: usize) -> Self {
        VectorMoments {
            n: 0,
            s1: vec![0.0; dim],
            s2: vec![0.0; dim],
            cost: 0.0,
        }
    }

    fn push(&mut self, values: &[f64], cost: f64) {
        self.n += 1;
        self.cost += cost;
        for (j, &v) in values.iter().enumerate() {
            self.s1[j] += v;
            self.s2[j] += v * v;
        }
    }

    fn merge(&mut self, other: &VectorMoments) {
        self.n += other.n;
        self.cost += other.cost;
        for j in 0..self.s1.len() {
            self.s1[j] += other.s1[j];
            self.s2[j] += other.s2[j];
        }
    }

    fn mean(&self, j: usize) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.s1[j] / self.n as f64
        }
    }

    fn variance(&self, j: usize) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let n = self.n as f64;
        let m = self.s1[j] / n;
        (self.s2[j] / n - m * m).max(0.0)
    }

    fn max_variance(&self) -> f64 {
        (0..self.s1.len())
            .map(|j| self.variance(j))
            .fold(0.0, f64::max)
    }

    fn max_abs_mean(&self) -> f64 {
        (0..self.s1.len())
            .map(|j| self.mean(j).abs())
            .fold(0.0, f64::max)
    }

    fn mean_cost(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.cost / self.n as f64
        }
    }
}

/// Tile-resumable accumulator, as in the scalar driver.
struct VectorAccumulator {
    tiles: Vec<VectorMoments>,
    n: u64,
    dim: usize,
}

impl VectorAccumulator {
    fn new(dim: usize) -> Self {
        VectorAccumulator {
            tiles: Vec::new(),
            n: 0,
            dim,
        }
    }

    fn extend<E: VectorLevelEstimator + ?Sized>(
        &mut self,
        estimator: &E,
        level: usize,
        root: &StreamKey,
        n_target: u64,
    ) {
        if n_target <= self.n {
            return;
        }
        let from = self.n;
        let dim = self.dim;
        let first_tile = from / TILE;
        let last_tile = (n_target - 1) / TILE;
        let level_key = root.derive(level as u64);
        let updated: Vec<(usize, VectorMoments)> = (first_tile..=last_tile)
            .into_par_iter()
            .map(|t| {
                let mut m = self
                    .tiles
                    .get(t as usize)
                    .cloned()
                    .unwrap_or_else(|| VectorMoments::new(dim));
                let mut buf = vec![0.0; dim];
                let lo = from.max(t * TILE);
                let hi = n_target.min((t + 1) * TILE);
                for i in lo..hi {
                    let key = level_key.derive(i);
                    let cost = estimator.sample_into(level, &key, &mut buf);
                    m.push(&buf, cost);
                }
                (t as usize, m)
            })
            .collect();
        for (t, m) in updated {
            if t < self.tiles.len() {
                self.tiles[t] = m;
            } else {
                self.tiles.push(m);
            }
        }
        self.n = n_target;
    }

    fn total(&self) -> VectorMoments {
        let mut acc = VectorMoments::new(self.dim);
        for t in &self.tiles {
            acc.merge(t);
        }
        acc
    }
}

/// MLMC over a vector of functionals sharing their path samples.
///
/// Allocation and the bias test use the worst grid point (maximum variance,
/// maximum absolute mean), so every component meets the scalar driver's
/// guarantees.
struct VectorMlmcOutput {
    estimates: Vec<f64>,
    stderr: Vec<f64>,
    total_cost: f64,
}

fn run_vector_mlmc<E: VectorLevelEstimator + ?Sized>(
    estimator: &E,
    epsilon: f64,
    config: &MlmcConfig,
) -> Result<VectorMlmcOutput, MlmcError> {
    if !(epsilon > 0.0) {
        return Err(MlmcError::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let dim = estimator.dim();
    let root = StreamKey::new(config.seed);
    let mut levels: Vec<VectorAccumulator> =
        (0..3).map(|_| VectorAccumulator::new(dim)).collect();
    let mut targets = vec![config.n_warm.max(config.n_min); 3];
    let tol = epsilon / std::f64::consts::SQRT_2;
    let mut alpha = 1.0f64;

    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > 1000 {
            return Err(MlmcError::InvalidInput(
                "vector allocation failed to converge".to_string(),
            ));
        }
        for (l, acc) in levels.iter_mut().enumerate() {
            acc.extend(estimator, l, &root, targets[l]);
        }
        let totals: Vec<VectorMoments> = levels.iter().map(|a| a.total()).collect();
        let vars: Vec<f64> = totals.iter().map(|m| m.max_variance()).collect();
        let costs: Vec<f64> = totals.iter().map(|m| m.mean_cost()).collect();
        let peaks: Vec<f64> = totals.iter().map(|m| m.max_abs_mean()).collect();

        let top = levels.len() - 1;
        if top >= 3 {
            // Fit the worst-point mean decay for the bias proxy.
            let xs: Vec<f64> = (1..=top).map(|l| l as f64).collect();
            let ys: Vec<f64> = (1..=top)
                .map(|l| peaks[l].max(1e-300).log2())
                .collect();
            alpha = (-linear_fit(&xs, &ys).1).max(0.5);
        }

        targets = crate::mlmc::optimal_allocation(&vars, &costs, epsilon, config.n_min)?;
        if targets.iter().zip(&levels).any(|(&t, a)| t > a.n) {
            continue;
        }

        let bias = peaks[top].max(peaks[top - 1] / 2f64.powf(alpha.max(0.5)))
            / (2f64.powf(alpha.max(0.5)) - 1.0);
        if bias <= tol {
            break;
        }
        if top == config.l_max {
            return Err(MlmcError::MaxLevelsExceeded {
                l_max: config.l_max,
                bias,
                tol,
                partial: Box::new(crate::mlmc::MlmcResult {
                    estimate: f64::NAN,
                    levels: Vec::new(),
                    rates: crate::mlmc::Rates {
                        alpha,
                        beta: f64::NAN,
                        gamma: f64::NAN,
                    },
                    epsilon,
                    total_cost: totals.iter().map(|m| m.cost).sum(),
                    warnings: vec!["vector MLMC partial result".to_string()],
                }),
            });
        }
        levels.push(VectorAccumulator::new(dim));
        targets.push(config.n_warm.max(config.n_min));
    }

    let totals: Vec<VectorMoments> = levels.iter().map(|a| a.total()).collect();
    let mut estimates = vec![0.0; dim];
    let mut sampling_var = vec![0.0; dim];
    let mut total_cost = 0.0;
    for m in &totals {
        total_cost += m.cost;
        for j in 0..dim {
            estimates[j] += m.mean(j);
            sampling_var[j] += m.variance(j) / m.n.max(1) as f64;
        }
    }
    Ok(VectorMlmcOutput {
        estimates,
        stderr: sampling_var.iter().map(|v| v.sqrt()).collect(),
        total_cost,
    })
}

/// Estimator of all smoothed indicators `H_delta(x_j - S_T)` on one path.
struct SmoothedCdfEstimator<'a, M: Sde> {
    model: &'a M,
    kernel: &'a SmoothingKernel,
    points: &'a [f64],
    scheme: Scheme,
    n0_steps: usize,
}

impl<M: Sde> VectorLevelEstimator for SmoothedCdfEstimator<'_, M> {
    fn dim(&self) -> usize {
        self.points.len()
    }
    fn sample_into(&self, level: usize, key: &StreamKey, out: &mut [f64]) -> f64 {
        let mut stream = GaussianStream::new(key);
        let st = simulate_coupled(self.model, level, self.n0_steps, self.scheme, &mut stream);
        for (j, &x) in self.points.iter().enumerate() {
            let fine = self.kernel.eval_hdelta(x - st.fine_terminal);
            let coarse = st
                .coarse_terminal
                .map(|s| self.kernel.eval_hdelta(x - s))
                .unwrap_or(0.0);
            out[j] = fine - coarse;
        }
        st.cost
    }
}

/// Estimator of all shifted put payoffs `max(0, x_j - S_T)` on one path.
struct ParityCdfEstimator<'a, M: Sde> {
    model: &'a M,
    points: &'a [f64],
    scheme: Scheme,
    n0_steps: usize,
}

impl<M: Sde> VectorLevelEstimator for ParityCdfEstimator<'_, M> {
    fn dim(&self) -> usize {
        self.points.len()
    }
    fn sample_into(&self, level: usize, key: &StreamKey, out: &mut [f64]) -> f64 {
        let mut stream = GaussianStream::new(key);
        let st = simulate_coupled(self.model, level, self.n0_steps, self.scheme, &mut stream);
        for (j, &x) in self.points.iter().enumerate() {
            let fine = (x - st.fine_terminal).max(0.0);
            let coarse = st
                .coarse_terminal
                .map(|s| (x - s).max(0.0))
                .unwrap_or(0.0);
            out[j] = fine - coarse;
        }
        st.cost
    }
}

/// How the CDF curve is read off the fitted spline.
#[derive(Debug, Clone)]
pub enum CdfCurve {
    /// The spline itself interpolates CDF values (smoothed construction).
    Spline(CubicSpline),
    /// The CDF is the derivative of a spline through integrated payoffs
    /// (parity construction).
    SplineDerivative(CubicSpline),
}

impl CdfCurve {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            CdfCurve::Spline(s) => s.eval(x),
            CdfCurve::SplineDerivative(s) => s.derivative(x),
        }
    }

    pub fn spline(&self) -> &CubicSpline {
        match self {
            CdfCurve::Spline(s) | CdfCurve::SplineDerivative(s) => s,
        }
    }
}

/// A fitted CDF estimate with per-point diagnostics.
#[derive(Debug, Clone)]
pub struct CdfEstimate {
    pub grid: SplineGrid,
    /// CDF value at each grid point (for the parity method, the spline
    /// derivative there).
    pub cdf_values: Vec<f64>,
    pub curve: CdfCurve,
    pub warnings: Vec<String>,
    pub total_cost: f64,
}

/// Options shared by both CDF constructions.
#[derive(Debug, Clone)]
pub struct CdfOptions {
    pub points: Vec<f64>,
    pub epsilon: f64,
    pub scheme: Scheme,
    pub n0_steps: usize,
    pub config: MlmcConfig,
}

/// Smoothed construction: MLMC estimates of `E[H_delta(x_j - S_T)]` splined
/// into a CDF. Monotonicity violations of the fitted spline are reported as
/// warnings; smoothing plus sampling noise can produce them.
pub fn estimate_cdf_smoothed<M: Sde>(
    model: &M,
    kernel: &SmoothingKernel,
    opts: &CdfOptions,
) -> Result<CdfEstimate, CdfError> {
    if opts.points.len() < 4 {
        return Err(CdfError::InsufficientPoints(opts.points.len()));
    }
    let est = SmoothedCdfEstimator {
        model,
        kernel,
        points: &opts.points,
        scheme: opts.scheme,
        n0_steps: opts.n0_steps,
    };
    let out = run_vector_mlmc(&est, opts.epsilon, &opts.config)?;
    let grid = SplineGrid::new(
        opts.points.clone(),
        out.estimates
            .iter()
            .zip(&out.stderr)
            .map(|(&e, &s)| (e, s))
            .collect(),
    )?;
    let spline = cubic_spline(&grid)?;
    let mut warnings = monotonicity_warnings(&spline);
    warnings.extend(out.stderr.iter().enumerate().filter_map(|(j, &s)| {
        (s > opts.epsilon).then(|| format!("point {j}: stderr {s:.2e} above epsilon"))
    }));
    Ok(CdfEstimate {
        cdf_values: out.estimates.clone(),
        grid,
        curve: CdfCurve::Spline(spline),
        warnings,
        total_cost: out.total_cost,
    })
}

/// Parity construction: MLMC estimates of the Lipschitz payoffs
/// `E[max(0, x_j - S_T)]` splined and differentiated into a CDF.
pub fn estimate_cdf_parity<M: Sde>(model: &M, opts: &CdfOptions) -> Result<CdfEstimate, CdfError> {
    if opts.points.len() < 4 {
        return Err(CdfError::InsufficientPoints(opts.points.len()));
    }
    let est = ParityCdfEstimator {
        model,
        points: &opts.points,
        scheme: opts.scheme,
        n0_steps: opts.n0_steps,
    };
    let out = run_vector_mlmc(&est, opts.epsilon, &opts.config)?;
    let grid = SplineGrid::new(
        opts.points.clone(),
        out.estimates
            .iter()
            .zip(&out.stderr)
            .map(|(&e, &s)| (e, s))
            .collect(),
    )?;
    let spline = cubic_spline(&grid)?;
    let cdf_values: Vec<f64> = opts.points.iter().map(|&x| spline.derivative(x)).collect();
    let warnings = monotonicity_warnings(&spline);
    Ok(CdfEstimate {
        grid,
        cdf_values,
        curve: CdfCurve::SplineDerivative(spline),
        warnings,
        total_cost: out.total_cost,
    })
}

fn monotonicity_warnings(spline: &CubicSpline) -> Vec<String> {
    let xs = spline.knots();
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let n = 512;
    let step = (hi - lo) / n as f64;
    let mut warnings = Vec::new();
    let mut last = spline.eval(lo);
    for i in 1..=n {
        let x = lo + i as f64 * step;
        let v = spline.eval(x);
        if v < last - 1e-12 {
            warnings.push(format!(
                "fitted curve decreases near x = {x:.4}; smoothing or noise artefact"
            ));
            break;
        }
        last = v;
    }
    warnings
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_grid() -> SplineGrid {
        SplineGrid::new(
            vec![0.0, 1.0, 2.0, 3.0],
            vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)],
        )
        .unwrap()
    }

    #[test]
    fn spline_reproduces_linear_data() {
        let s = cubic_spline(&linear_grid()).unwrap();
        assert!((s.eval(1.5) - 1.5).abs() < 1e-12);
        for x in [0.0, 0.3, 1.7, 2.9, 3.0] {
            assert!((s.derivative(x) - 1.0).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn spline_interpolates_its_knots_exactly() {
        let points = vec![0.0, 0.7, 1.1, 2.0, 2.4, 3.0];
        let values: Vec<(f64, f64)> = points
            .iter()
            .map(|&x| ((x * 1.3).sin() + 0.2 * x * x, 0.0))
            .collect();
        let grid = SplineGrid::new(points.clone(), values.clone()).unwrap();
        let s = cubic_spline(&grid).unwrap();
        for (x, (v, _)) in points.iter().zip(&values) {
            assert!((s.eval(*x) - v).abs() < 1e-12);
        }
        // Natural end conditions.
        assert!(s.second_derivative_at_knot(0).abs() < 1e-10);
        assert!(s.second_derivative_at_knot(points.len() - 1).abs() < 1e-10);
    }

    #[test]
    fn spline_tracks_sine_closely() {
        let n = 9;
        let points: Vec<f64> = (0..n)
            .map(|j| std::f64::consts::PI * j as f64 / (n - 1) as f64)
            .collect();
        let values: Vec<(f64, f64)> = points.iter().map(|&x| (x.sin(), 0.0)).collect();
        let grid = SplineGrid::new(points, values).unwrap();
        let s = cubic_spline(&grid).unwrap();
        let mut worst = 0.0f64;
        for i in 0..=400 {
            let x = std::f64::consts::PI * i as f64 / 400.0;
            worst = worst.max((s.eval(x) - x.sin()).abs());
        }
        assert!(worst < 2e-3, "max abs error {worst}");
    }

    #[test]
    fn grid_validation() {
        assert!(matches!(
            SplineGrid::new(vec![0.0, 1.0, 2.0], vec![(0.0, 0.0); 3]),
            Err(CdfError::InsufficientPoints(3))
        ));
        assert!(matches!(
            SplineGrid::new(vec![0.0, 2.0, 1.0, 3.0], vec![(0.0, 0.0); 4]),
            Err(CdfError::InvalidGrid(_))
        ));
    }

    #[test]
    fn derivative_integrates_back_to_spline_values() {
        // Fundamental-theorem consistency on the spline itself: the trapezoid
        // integral of s' over a dense grid recovers s.
        let points = vec![0.0, 0.5, 1.2, 1.9, 2.5, 3.0];
        let values: Vec<(f64, f64)> = points.iter().map(|&x| ((0.9 * x).cos(), 0.0)).collect();
        let grid = SplineGrid::new(points.clone(), values).unwrap();
        let s = cubic_spline(&grid).unwrap();
        let n = 30_000;
        let (lo, hi) = (points[0], points[points.len() - 1]);
        let h = (hi - lo) / n as f64;
        let mut acc = s.eval(lo);
        for i in 0..n {
            let x = lo + i as f64 * h;
            acc += 0.5 * h * (s.derivative(x) + s.derivative(x + h));
            let want = s.eval(x + h);
            assert!(
                (acc - want).abs() < 1e-6,
                "x = {}: integral {acc} vs spline {want}",
                x + h
            );
        }
    }
}
