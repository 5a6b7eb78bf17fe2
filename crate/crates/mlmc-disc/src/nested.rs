//! MLMC estimators for nested expectations `E[f(E[Z | X])]`.
//!
//! Level `l` estimates the inner conditional expectation with `M_l = 2^l M_0`
//! inner samples; the correction couples two averages over the same outer
//! draw. The adaptive variant grows the inner sample count up to `4^l M_0`
//! while the running average cannot be distinguished from the threshold,
//! which restores `V_l ~ 2^-l` for the Heaviside outer function at
//! near-linear cost.

use crate::mlmc::{CorrectionSample, LevelEstimator};
use crate::rng::{GaussianStream, StreamKey};

/// Sampler pair defining a nested problem: an outer draw `X` and conditionally
/// i.i.d. inner draws `Z | X`.
pub trait NestedModel: Sync {
    fn sample_outer(&self, stream: &mut GaussianStream) -> f64;
    fn sample_inner(&self, x: f64, stream: &mut GaussianStream) -> f64;
}

/// Built-in test problem: `X ~ N(0,1)`, `Z | X ~ N(X, 1)`, so
/// `E[Z | X] = X` and `P(E[Z|X] >= 0) = 1/2` exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianNested;

impl NestedModel for GaussianNested {
    fn sample_outer(&self, stream: &mut GaussianStream) -> f64 {
        stream.next_normal()
    }
    fn sample_inner(&self, x: f64, stream: &mut GaussianStream) -> f64 {
        x + stream.next_normal()
    }
}

/// Outer function applied to the inner average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OuterFunction {
    /// `H(z - threshold)` with `H(0) = 1`: a threshold-crossing probability.
    Heaviside { threshold: f64 },
    /// Identity, the Lipschitz baseline.
    Identity,
}

impl OuterFunction {
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            OuterFunction::Heaviside { threshold } => {
                if z >= *threshold {
                    1.0
                } else {
                    0.0
                }
            }
            OuterFunction::Identity => z,
        }
    }

    fn threshold(&self) -> f64 {
        match self {
            OuterFunction::Heaviside { threshold } => *threshold,
            OuterFunction::Identity => 0.0,
        }
    }
}

/// A nested-expectation problem: model, outer function and base inner count.
#[derive(Debug, Clone)]
pub struct NestedProblem<M: NestedModel> {
    pub model: M,
    pub outer_fn: OuterFunction,
    pub m0: u64,
}

impl<M: NestedModel> NestedProblem<M> {
    pub fn new(model: M, outer_fn: OuterFunction, m0: u64) -> Self {
        assert!(m0 >= 1, "m0 must be at least 1");
        NestedProblem { model, outer_fn, m0 }
    }
}

/// Lazily grown pool of inner draws for one outer sample.
struct InnerPool<'a, M: NestedModel> {
    model: &'a M,
    x: f64,
    stream: GaussianStream,
    draws: Vec<f64>,
}

impl<'a, M: NestedModel> InnerPool<'a, M> {
    fn ensure(&mut self, n: usize) {
        while self.draws.len() < n {
            let z = self.model.sample_inner(self.x, &mut self.stream);
            self.draws.push(z);
        }
    }

    /// Mean and unbiased sample variance of the first `n` draws.
    fn mean_var(&mut self, n: usize) -> (f64, f64) {
        self.ensure(n);
        let slice = &self.draws[..n];
        let mean = slice.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return (mean, 0.0);
        }
        let ss: f64 = slice.iter().map(|z| (z - mean) * (z - mean)).sum();
        (mean, ss / (n - 1) as f64)
    }
}

/// Plain nested correction with geometric inner sampling.
///
/// One outer draw; level 0 evaluates `f` at the average of `M_0` inner draws,
/// higher levels difference `f` at independent averages of `M_l` and
/// `M_{l-1}` draws. Cost counts inner draws.
pub fn y_nested_plain<M: NestedModel>(
    problem: &NestedProblem<M>,
    level: usize,
    key: &StreamKey,
) -> CorrectionSample {
    let mut outer = GaussianStream::new(&key.derive(0));
    let x = problem.model.sample_outer(&mut outer);
    let mut inner = GaussianStream::new(&key.derive(1));
    let f = &problem.outer_fn;

    let m_fine = problem.m0 << level;
    let mut sum = 0.0;
    for _ in 0..m_fine {
        sum += problem.model.sample_inner(x, &mut inner);
    }
    let fine = f.eval(sum / m_fine as f64);
    if level == 0 {
        return CorrectionSample::coupled(fine, 0.0, m_fine as f64);
    }
    let m_coarse = m_fine / 2;
    let mut sum_c = 0.0;
    for _ in 0..m_coarse {
        sum_c += problem.model.sample_inner(x, &mut inner);
    }
    let coarse = f.eval(sum_c / m_coarse as f64);
    CorrectionSample::coupled(fine, coarse, (m_fine + m_coarse) as f64)
}

/// Doubling loop of the adaptive rule: starting from `m_start` draws, double
/// while `|mean - K| <= c sqrt(var / m)` and the cap is not reached. Returns
/// the final mean and count.
fn adapt<M: NestedModel>(
    pool: &mut InnerPool<'_, M>,
    m_start: u64,
    m_cap: u64,
    threshold: f64,
    c_adapt: f64,
) -> (f64, u64) {
    let mut m = m_start;
    loop {
        let (mean, var) = pool.mean_var(m as usize);
        let band = c_adapt * (var / m as f64).sqrt();
        if (mean - threshold).abs() > band || m >= m_cap {
            return (mean, m);
        }
        m *= 2;
    }
}

/// Adaptive nested correction.
///
/// Fine and coarse estimates run the same doubling rule at their own level's
/// targets (`2^l M_0` start, `4^l M_0` cap); the coarse estimate reuses the
/// fine pool's leading draws, which couples the two positively without
/// changing either marginal law. Cost counts distinct inner draws.
pub fn y_nested_adaptive<M: NestedModel>(
    problem: &NestedProblem<M>,
    level: usize,
    key: &StreamKey,
    c_adapt: f64,
) -> CorrectionSample {
    let mut outer = GaussianStream::new(&key.derive(0));
    let x = problem.model.sample_outer(&mut outer);
    let mut pool = InnerPool {
        model: &problem.model,
        x,
        stream: GaussianStream::new(&key.derive(1)),
        draws: Vec::new(),
    };
    let f = &problem.outer_fn;
    let k = f.threshold();

    if level == 0 {
        let (mean, _) = pool.mean_var(problem.m0 as usize);
        return CorrectionSample::coupled(f.eval(mean), 0.0, pool.draws.len() as f64);
    }

    let fine_start = problem.m0 << level;
    let fine_cap = problem.m0 << (2 * level);
    let (fine_mean, _) = adapt(&mut pool, fine_start, fine_cap, k, c_adapt);
    let coarse_start = problem.m0 << (level - 1);
    let coarse_cap = problem.m0 << (2 * (level - 1));
    let (coarse_mean, _) = adapt(&mut pool, coarse_start, coarse_cap, k, c_adapt);

    CorrectionSample::coupled(
        f.eval(fine_mean),
        f.eval(coarse_mean),
        pool.draws.len() as f64,
    )
}

/// Inner sampling strategy for [`NestedEstimator`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NestedSampling {
    Plain,
    Adaptive { c_adapt: f64 },
}

/// Level estimator adapter for nested problems.
#[derive(Debug, Clone)]
pub struct NestedEstimator<M: NestedModel> {
    pub problem: NestedProblem<M>,
    pub sampling: NestedSampling,
}

impl<M: NestedModel> LevelEstimator for NestedEstimator<M> {
    fn sample(&self, level: usize, key: &StreamKey) -> CorrectionSample {
        match self.sampling {
            NestedSampling::Plain => y_nested_plain(&self.problem, level, key),
            NestedSampling::Adaptive { c_adapt } => {
                y_nested_adaptive(&self.problem, level, key, c_adapt)
            }
        }
    }
}
