//! Generic multilevel Monte Carlo driver.
//!
//! The driver telescopes correction samples `Y_l` supplied by a
//! [`LevelEstimator`]: it warms up a few levels, estimates per-level variance
//! and cost, allocates samples to minimise total cost for the target RMS
//! error, and extends the level range until a Richardson-style bias proxy is
//! below tolerance.
//!
//! Sampling is organised in fixed tiles of [`TILE`] samples. Each sample's
//! randomness comes from a key derived from `(level, sample index)`, tiles are
//! filled sequentially and merged in index order, so results are bit-identical
//! regardless of how the work was batched or how many threads ran it.

use crate::math::linear_fit;
use crate::rng::StreamKey;
use rayon::prelude::*;
use thiserror::Error;

/// Number of samples accumulated per tile; fixed so that batch boundaries
/// never influence floating-point summation order.
pub const TILE: u64 = 1024;

/// Errors from the MLMC layer.
#[derive(Debug, Error)]
pub enum MlmcError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("kurtosis undefined: {0}")]
    UndefinedKurtosis(String),
    #[error("maximum level {l_max} reached with bias {bias:.3e} above tolerance {tol:.3e}")]
    MaxLevelsExceeded {
        l_max: usize,
        bias: f64,
        tol: f64,
        partial: Box<MlmcResult>,
    },
}

/// Running power sums of level-correction samples plus accumulated cost.
///
/// Merge is associative and commutative on the counts; floating-point sums
/// agree with single-batch accumulation to rounding when merged in a fixed
/// order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LevelMoments {
    n: u64,
    s1: f64,
    s2: f64,
    s3: f64,
    s4: f64,
    cost: f64,
}

impl LevelMoments {
    pub fn new() -> Self {
        Self::default()
    }

    /// Accumulate one correction sample with its cost in work units.
    #[inline]
    pub fn push(&mut self, y: f64, cost: f64) {
        let y2 = y * y;
        self.n += 1;
        self.s1 += y;
        self.s2 += y2;
        self.s3 += y2 * y;
        self.s4 += y2 * y2;
        self.cost += cost;
    }

    /// Merge another accumulator into this one.
    pub fn merge(&mut self, other: &LevelMoments) {
        self.n += other.n;
        self.s1 += other.s1;
        self.s2 += other.s2;
        self.s3 += other.s3;
        self.s4 += other.s4;
        self.cost += other.cost;
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn total_cost(&self) -> f64 {
        self.cost
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.s1 / self.n as f64
        }
    }

    /// Population variance estimate, clamped at zero against rounding.
    pub fn variance(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let n = self.n as f64;
        let m = self.s1 / n;
        (self.s2 / n - m * m).max(0.0)
    }

    /// Mean cost per sample.
    pub fn mean_cost(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.cost / self.n as f64
        }
    }

    /// Non-excess kurtosis: central fourth moment over squared variance.
    pub fn kurtosis(&self) -> Result<f64, MlmcError> {
        kurtosis(self)
    }
}

/// Non-excess kurtosis of the accumulated samples.
///
/// Needs at least four samples and strictly positive variance.
pub fn kurtosis(m: &LevelMoments) -> Result<f64, MlmcError> {
    if m.n < 4 {
        return Err(MlmcError::UndefinedKurtosis(format!(
            "need at least 4 samples, have {}",
            m.n
        )));
    }
    let n = m.n as f64;
    let m1 = m.s1 / n;
    let m2 = m.s2 / n - m1 * m1;
    if m2 <= 0.0 {
        return Err(MlmcError::UndefinedKurtosis(
            "zero sample variance".to_string(),
        ));
    }
    let m3 = m.s3 / n;
    let m4 = m.s4 / n;
    let c4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * (m.s2 / n) - 3.0 * m1.powi(4);
    Ok(c4 / (m2 * m2))
}

/// Cost-optimal sample counts for a target RMS sampling error.
///
/// Returns `N_l = ceil(2 eps^-2 sqrt(V_l / C_l) * sum_k sqrt(V_k C_k))`,
/// clamped below by `n_min`; the returned counts satisfy
/// `sum_l V_l / N_l <= eps^2 / 2`.
pub fn optimal_allocation(
    variances: &[f64],
    costs: &[f64],
    epsilon: f64,
    n_min: u64,
) -> Result<Vec<u64>, MlmcError> {
    if variances.len() != costs.len() || variances.is_empty() {
        return Err(MlmcError::InvalidInput(
            "variances and costs must be non-empty and of equal length".to_string(),
        ));
    }
    if !(epsilon > 0.0) {
        return Err(MlmcError::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    for (l, (&v, &c)) in variances.iter().zip(costs).enumerate() {
        if !(c > 0.0) {
            return Err(MlmcError::InvalidInput(format!(
                "cost on level {l} must be positive, got {c}"
            )));
        }
        if v < 0.0 {
            return Err(MlmcError::InvalidInput(format!(
                "variance on level {l} must be non-negative, got {v}"
            )));
        }
    }
    let s: f64 = variances
        .iter()
        .zip(costs)
        .map(|(&v, &c)| (v * c).sqrt())
        .sum();
    let scale = 2.0 / (epsilon * epsilon);
    Ok(variances
        .iter()
        .zip(costs)
        .map(|(&v, &c)| {
            let ideal = scale * (v / c).sqrt() * s;
            (ideal.ceil() as u64).max(n_min)
        })
        .collect())
}

/// Fitted decay/growth rates of means, variances and costs across levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    /// Weak-error decay: |mean_l| ~ 2^(-alpha l).
    pub alpha: f64,
    /// Variance decay: V_l ~ 2^(-beta l).
    pub beta: f64,
    /// Cost growth: C_l ~ 2^(gamma l).
    pub gamma: f64,
}

/// Result of [`fit_rates`], including levels excluded from individual fits.
#[derive(Debug, Clone)]
pub struct RateFit {
    pub rates: Rates,
    pub warnings: Vec<String>,
}

/// Least-squares fit of `log2` means, variances and costs against the level
/// index, over levels `l >= l_min_fit`.
///
/// Levels with zero variance (or zero mean / cost) are excluded from the
/// corresponding fit with a warning; each fit needs at least three usable
/// levels.
pub fn fit_rates(
    means: &[f64],
    variances: &[f64],
    costs: &[f64],
    l_min_fit: usize,
) -> Result<RateFit, MlmcError> {
    if means.len() != variances.len() || means.len() != costs.len() {
        return Err(MlmcError::InvalidInput(
            "means, variances, costs must have equal length".to_string(),
        ));
    }
    let mut warnings = Vec::new();
    let mut fit_one = |values: &[f64], name: &str| -> Result<f64, MlmcError> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (l, &v) in values.iter().enumerate() {
            if l < l_min_fit {
                continue;
            }
            let mag = v.abs();
            if mag > 0.0 {
                xs.push(l as f64);
                ys.push(mag.log2());
            } else {
                warnings.push(format!("level {l} excluded from {name} fit: zero value"));
            }
        }
        if xs.len() < 3 {
            return Err(MlmcError::InsufficientData(format!(
                "{name} fit needs at least 3 usable levels above l_min_fit={l_min_fit}, found {}",
                xs.len()
            )));
        }
        Ok(linear_fit(&xs, &ys).1)
    };
    let alpha = -fit_one(means, "alpha")?;
    let beta = -fit_one(variances, "beta")?;
    let gamma = fit_one(costs, "gamma")?;
    Ok(RateFit {
        rates: Rates { alpha, beta, gamma },
        warnings,
    })
}

/// One correction draw: the telescoped value, its fine and coarse parts and
/// the cost in model work units.
///
/// For most estimators `value == fine - coarse`; the change-of-measure
/// estimator reports a variance-reduced `value` whose expectation still
/// equals `E[fine - coarse]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionSample {
    pub value: f64,
    pub fine: f64,
    pub coarse: f64,
    pub cost: f64,
}

impl CorrectionSample {
    /// Sample whose value is exactly fine minus coarse.
    pub fn coupled(fine: f64, coarse: f64, cost: f64) -> Self {
        CorrectionSample {
            value: fine - coarse,
            fine,
            coarse,
            cost,
        }
    }
}

/// Source of i.i.d. level-correction samples `Y_l` with
/// `E[Y_l] = E[P_l - P_{l-1}]` (and `P_{-1} = 0`).
///
/// Implementations must be pure functions of `(level, key)` so that runs
/// replay bit-identically.
pub trait LevelEstimator: Sync {
    fn sample(&self, level: usize, key: &StreamKey) -> CorrectionSample;
}

/// Driver configuration. `epsilon` is passed to [`run_mlmc`] directly.
#[derive(Debug, Clone)]
pub struct MlmcConfig {
    /// Root seed for all streams.
    pub seed: u64,
    /// First level used in rate fits (clamped down when few levels exist).
    pub l_min_fit: usize,
    /// Hard cap on the finest level index.
    pub l_max: usize,
    /// Warm-up samples per newly activated level.
    pub n_warm: u64,
    /// Minimum samples kept on any active level.
    pub n_min: u64,
}

impl Default for MlmcConfig {
    fn default() -> Self {
        MlmcConfig {
            seed: 0,
            l_min_fit: 2,
            l_max: 12,
            n_warm: 1000,
            n_min: 32,
        }
    }
}

/// Per-level statistics reported by [`run_mlmc`].
#[derive(Debug, Clone)]
pub struct LevelStats {
    pub level: usize,
    pub n: u64,
    pub mean: f64,
    pub variance: f64,
    /// Mean cost per sample in work units.
    pub cost: f64,
    pub kurtosis: Option<f64>,
}

/// Final MLMC output: telescoped estimate plus per-level diagnostics.
#[derive(Debug, Clone)]
pub struct MlmcResult {
    pub estimate: f64,
    pub levels: Vec<LevelStats>,
    pub rates: Rates,
    pub epsilon: f64,
    pub total_cost: f64,
    pub warnings: Vec<String>,
}

/// Tile-resumable sample store for one level.
#[derive(Debug, Clone, Default)]
struct LevelAccumulator {
    tiles: Vec<LevelMoments>,
    n: u64,
}

impl LevelAccumulator {
    /// Extend the level to `n_target` samples, computing new samples in
    /// parallel tiles and resuming partially filled tiles sequentially.
    fn extend<E: LevelEstimator + ?Sized>(
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
        let first_tile = from / TILE;
        let last_tile = (n_target - 1) / TILE;
        let level_key = root.derive(level as u64);
        let updated: Vec<(usize, LevelMoments)> = (first_tile..=last_tile)
            .into_par_iter()
            .map(|t| {
                let mut m = self
                    .tiles
                    .get(t as usize)
                    .cloned()
                    .unwrap_or_default();
                let lo = from.max(t * TILE);
                let hi = n_target.min((t + 1) * TILE);
                for i in lo..hi {
                    let key = level_key.derive(i);
                    let s = estimator.sample(level, &key);
                    m.push(s.value, s.cost);
                }
                (t as usize, m)
            })
            .collect();
        for (t, m) in updated {
            if t < self.tiles.len() {
                self.tiles[t] = m;
            } else {
                debug_assert_eq!(t, self.tiles.len());
                self.tiles.push(m);
            }
        }
        self.n = n_target;
    }

    /// Fold tiles in index order into a single accumulator.
    fn total(&self) -> LevelMoments {
        let mut acc = LevelMoments::new();
        for t in &self.tiles {
            acc.merge(t);
        }
        acc
    }
}

/// Sample a fixed number of corrections on one level.
///
/// Used by convergence studies; shares the tile layout (and therefore the
/// exact draws) with [`run_mlmc`].
pub fn sample_level<E: LevelEstimator + ?Sized>(
    estimator: &E,
    level: usize,
    n: u64,
    seed: u64,
) -> LevelMoments {
    let mut acc = LevelAccumulator::default();
    acc.extend(estimator, level, &StreamKey::new(seed), n);
    acc.total()
}

/// Adaptive MLMC loop.
///
/// Warm-up samples are taken on levels 0..=2, then sample counts follow
/// [`optimal_allocation`] with the error split eps^2/2 to variance and
/// eps^2/2 to squared bias. Levels are appended while the bias proxy
/// `max(|m_L|, |m_{L-1}|/2^alpha) / (2^alpha - 1)` exceeds `eps / sqrt(2)`,
/// using the fitted `alpha` (clamped to at least 0.5).
pub fn run_mlmc<E: LevelEstimator + ?Sized>(
    estimator: &E,
    epsilon: f64,
    config: &MlmcConfig,
) -> Result<MlmcResult, MlmcError> {
    if !(epsilon > 0.0) {
        return Err(MlmcError::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if config.l_max < 2 {
        return Err(MlmcError::InvalidInput(format!(
            "l_max must be at least 2, got {}",
            config.l_max
        )));
    }
    if config.n_min == 0 || config.n_warm == 0 {
        return Err(MlmcError::InvalidInput(
            "n_min and n_warm must be positive".to_string(),
        ));
    }

    let root = StreamKey::new(config.seed);
    let mut levels: Vec<LevelAccumulator> = (0..3).map(|_| LevelAccumulator::default()).collect();
    let mut targets: Vec<u64> = vec![config.n_warm.max(config.n_min); 3];
    let mut warnings: Vec<String> = Vec::new();
    let mut rates = Rates {
        alpha: 1.0,
        beta: 1.0,
        gamma: 1.0,
    };
    let tol = epsilon / std::f64::consts::SQRT_2;

    let mut iterations = 0usize;
    loop {
        iterations += 1;
        if iterations > 1000 {
            return Err(MlmcError::InvalidInput(
                "sample allocation failed to converge after 1000 iterations".to_string(),
            ));
        }

        for (l, acc) in levels.iter_mut().enumerate() {
            let t = targets[l];
            acc.extend(estimator, l, &root, t);
        }

        let totals: Vec<LevelMoments> = levels.iter().map(|a| a.total()).collect();
        let means: Vec<f64> = totals.iter().map(|m| m.mean()).collect();
        let vars: Vec<f64> = totals.iter().map(|m| m.variance()).collect();
        let costs: Vec<f64> = totals.iter().map(|m| m.mean_cost()).collect();

        let top = levels.len() - 1;
        if top >= 3 {
            let start = config.l_min_fit.min(top.saturating_sub(2)).max(1);
            match fit_rates(&means, &vars, &costs, start) {
                Ok(fit) => rates = fit.rates,
                Err(_) => {} // keep previous rates; zero-variance levels at warm-up
            }
        }
        let alpha = rates.alpha.max(0.5);

        targets = optimal_allocation(&vars, &costs, epsilon, config.n_min)?;
        if targets
            .iter()
            .zip(&levels)
            .any(|(&t, acc)| t > acc.n)
        {
            continue;
        }

        let bias = (means[top].abs()).max(means[top - 1].abs() / 2f64.powf(alpha))
            / (2f64.powf(alpha) - 1.0);
        if bias <= tol {
            break;
        }
        if top == config.l_max {
            let partial = build_result(&levels, rates, epsilon, &mut warnings);
            return Err(MlmcError::MaxLevelsExceeded {
                l_max: config.l_max,
                bias,
                tol,
                partial: Box::new(partial),
            });
        }
        levels.push(LevelAccumulator::default());
        targets.push(config.n_warm.max(config.n_min));
    }

    Ok(build_result(&levels, rates, epsilon, &mut warnings))
}

fn build_result(
    levels: &[LevelAccumulator],
    rates: Rates,
    epsilon: f64,
    warnings: &mut Vec<String>,
) -> MlmcResult {
    let mut stats = Vec::with_capacity(levels.len());
    let mut estimate = 0.0;
    let mut total_cost = 0.0;
    for (l, acc) in levels.iter().enumerate() {
        let m = acc.total();
        let kurt = kurtosis(&m).ok();
        if let Some(k) = kurt {
            if k > 100.0 {
                warnings.push(format!(
                    "level {l}: kurtosis {k:.1} above 100; variance estimate may be unreliable"
                ));
            }
        }
        estimate += m.mean();
        total_cost += m.total_cost();
        stats.push(LevelStats {
            level: l,
            n: m.n(),
            mean: m.mean(),
            variance: m.variance(),
            cost: m.mean_cost(),
            kurtosis: kurt,
        });
    }
    MlmcResult {
        estimate,
        levels: stats,
        rates,
        epsilon,
        total_cost,
        warnings: std::mem::take(warnings),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::GaussianStream;

    #[test]
    fn allocation_closed_form_single_level() {
        // 2 * eps^-2 * sqrt(V/C) * sqrt(VC) = 2 * 100 * 1 * 1 = 200.
        let n = optimal_allocation(&[1.0], &[1.0], 0.1, 1).unwrap();
        assert_eq!(n, vec![200]);
    }

    #[test]
    fn allocation_two_levels_hand_evaluated() {
        // V=[4,1], C=[1,4]: sum sqrt(VC) = 2 + 2 = 4.
        // N0 = 200 * sqrt(4/1) * 4 = 1600, N1 = 200 * sqrt(1/4) * 4 = 400.
        let n = optimal_allocation(&[4.0, 1.0], &[1.0, 4.0], 0.1, 1).unwrap();
        assert_eq!(n, vec![1600, 400]);
    }

    #[test]
    fn allocation_clamps_zero_variance_to_minimum() {
        let n = optimal_allocation(&[1.0, 0.0], &[1.0, 1.0], 0.1, 32).unwrap();
        assert_eq!(n[1], 32);
    }

    #[test]
    fn allocation_satisfies_variance_constraint() {
        let v = [2.0, 0.7, 0.21, 0.06];
        let c = [1.0, 2.0, 4.0, 8.0];
        let eps = 0.03;
        let n = optimal_allocation(&v, &c, eps, 1).unwrap();
        let total: f64 = v.iter().zip(&n).map(|(&v, &n)| v / n as f64).sum();
        assert!(total <= eps * eps / 2.0 + 1e-12);
        // Within one unit per level of the real-valued minimiser.
        let s: f64 = v.iter().zip(&c).map(|(&v, &c)| (v * c).sqrt()).sum();
        for (l, &nl) in n.iter().enumerate() {
            let ideal = 2.0 / (eps * eps) * (v[l] / c[l]).sqrt() * s;
            assert!((nl as f64 - ideal).abs() <= 1.0);
        }
    }

    #[test]
    fn allocation_rejects_bad_input() {
        assert!(optimal_allocation(&[1.0], &[0.0], 0.1, 1).is_err());
        assert!(optimal_allocation(&[1.0], &[1.0], 0.0, 1).is_err());
        assert!(optimal_allocation(&[-1.0], &[1.0], 0.1, 1).is_err());
    }

    #[test]
    fn rate_fit_exact_geometric_inputs() {
        let means = [1.0, 0.25, 0.0625, 0.015625];
        let vars = [1.0, 0.5, 0.25, 0.125];
        let costs = [1.0, 2.0, 4.0, 8.0];
        let fit = fit_rates(&means, &vars, &costs, 0).unwrap();
        assert!((fit.rates.alpha - 2.0).abs() < 1e-12);
        assert!((fit.rates.beta - 1.0).abs() < 1e-12);
        assert!((fit.rates.gamma - 1.0).abs() < 1e-12);
        assert!(fit.warnings.is_empty());
    }

    #[test]
    fn rate_fit_excludes_zero_levels_with_warning() {
        let means = [1.0, 0.5, 0.25, 0.125, 0.0625];
        let vars = [1.0, 0.5, 0.0, 0.125, 0.0625];
        let costs = [1.0, 2.0, 4.0, 8.0, 16.0];
        let fit = fit_rates(&means, &vars, &costs, 0).unwrap();
        assert!((fit.rates.beta - 1.0).abs() < 1e-9);
        assert!(fit.warnings.iter().any(|w| w.contains("level 2")));
    }

    #[test]
    fn rate_fit_insufficient_levels() {
        let v = [1.0, 0.5];
        assert!(matches!(
            fit_rates(&v, &v, &v, 0),
            Err(MlmcError::InsufficientData(_))
        ));
    }

    #[test]
    fn kurtosis_bernoulli_half() {
        // Samples {0, 1} with equal frequency: (1 - 3pq)/(pq) = 1 at p = 1/2.
        let mut m = LevelMoments::new();
        for i in 0..1000 {
            m.push((i % 2) as f64, 1.0);
        }
        assert!((kurtosis(&m).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kurtosis_undefined_for_constant_samples() {
        let mut m = LevelMoments::new();
        for _ in 0..10 {
            m.push(1.5, 1.0);
        }
        assert!(matches!(
            kurtosis(&m),
            Err(MlmcError::UndefinedKurtosis(_))
        ));
        let mut small = LevelMoments::new();
        small.push(0.0, 1.0);
        assert!(kurtosis(&small).is_err());
    }

    #[test]
    fn moments_merge_matches_bulk_accumulation() {
        let values: Vec<f64> = (0..500).map(|i| ((i * 37) % 101) as f64 / 101.0 - 0.3).collect();
        let mut bulk = LevelMoments::new();
        for &v in &values {
            bulk.push(v, 2.0);
        }
        let mut left = LevelMoments::new();
        let mut right = LevelMoments::new();
        for &v in &values[..200] {
            left.push(v, 2.0);
        }
        for &v in &values[200..] {
            right.push(v, 2.0);
        }
        let mut merged = left.clone();
        merged.merge(&right);
        assert_eq!(merged.n(), bulk.n());
        assert!((merged.mean() - bulk.mean()).abs() <= 1e-12 * bulk.mean().abs().max(1.0));
        assert!((merged.variance() - bulk.variance()).abs() <= 1e-12);
    }

    /// Level 0 draws N(1,1); corrections above level 0 are exactly zero.
    struct SingleLevel;

    impl LevelEstimator for SingleLevel {
        fn sample(&self, level: usize, key: &StreamKey) -> CorrectionSample {
            if level == 0 {
                let mut s = GaussianStream::new(key);
                CorrectionSample::coupled(1.0 + s.next_normal(), 0.0, 1.0)
            } else {
                CorrectionSample::coupled(0.0, 0.0, 1.0)
            }
        }
    }

    #[test]
    fn driver_single_level_sanity() {
        let cfg = MlmcConfig {
            seed: 11,
            ..MlmcConfig::default()
        };
        let res = run_mlmc(&SingleLevel, 0.01, &cfg).unwrap();
        assert!(
            (res.estimate - 1.0).abs() < 0.03,
            "estimate {} not within 3 eps of 1",
            res.estimate
        );
        // Telescoping: estimate equals the sum of per-level means.
        let sum: f64 = res.levels.iter().map(|l| l.mean).sum();
        assert!((res.estimate - sum).abs() < 1e-15);
        assert!(res.levels.iter().all(|l| l.n >= 32));
    }

    #[test]
    fn driver_rejects_zero_epsilon() {
        assert!(matches!(
            run_mlmc(&SingleLevel, 0.0, &MlmcConfig::default()),
            Err(MlmcError::InvalidInput(_))
        ));
    }

    #[test]
    fn driver_is_bit_exact_across_runs() {
        let cfg = MlmcConfig {
            seed: 5,
            ..MlmcConfig::default()
        };
        let a = run_mlmc(&SingleLevel, 0.02, &cfg).unwrap();
        let b = run_mlmc(&SingleLevel, 0.02, &cfg).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        assert_eq!(a.total_cost.to_bits(), b.total_cost.to_bits());
    }

    #[test]
    fn tiled_extension_is_independent_of_batching() {
        let root = StreamKey::new(99);
        let mut one_shot = LevelAccumulator::default();
        one_shot.extend(&SingleLevel, 0, &root, 5000);
        let mut pieces = LevelAccumulator::default();
        for cut in [1, 700, 1024, 1500, 2048, 3333, 5000] {
            pieces.extend(&SingleLevel, 0, &root, cut);
        }
        let a = one_shot.total();
        let b = pieces.total();
        assert_eq!(a.n(), b.n());
        assert_eq!(a.mean().to_bits(), b.mean().to_bits());
        assert_eq!(a.variance().to_bits(), b.variance().to_bits());
    }
}
