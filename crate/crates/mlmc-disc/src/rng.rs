//! Deterministic, splittable random streams.
//!
//! Every estimator in this crate draws its randomness from a [`GaussianStream`]
//! identified by a [`StreamKey`]. A key is a seed plus a path of indices
//! (estimator, level, sample, split, ...); deriving child keys never mutates
//! the parent, so samples can be generated in any order, on any number of
//! threads, and still reproduce bit-identically.
//!
//! Generation is counter-based: the n-th draw of a stream is a pure function
//! of `(key, n)`. Uniforms come from a SplitMix64-style Weyl sequence keyed by
//! a hash of the stream key; normals are obtained through the inverse CDF so
//! that the uniform-to-normal map is monotone and replayable.

use crate::math::inverse_normal_cdf;
use thiserror::Error;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finaliser: a bijective 64-bit mixing function.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifier of an independent random stream: a seed plus a derivation path.
///
/// Distinct paths under the same seed give statistically independent streams;
/// the same key always reproduces the same stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StreamKey {
    seed: u64,
    path: Vec<u64>,
}

impl StreamKey {
    /// Root key for a run.
    pub fn new(seed: u64) -> Self {
        StreamKey { seed, path: Vec::new() }
    }

    /// Child key, independent of the parent and of all siblings.
    pub fn derive(&self, child_index: u64) -> Self {
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(child_index);
        StreamKey { seed: self.seed, path }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Collapse the key into the 64-bit state that seeds its generator.
    ///
    /// Chained `mix64(h ^ x)` absorption; the final length absorption keeps
    /// prefix keys (`[a]` vs `[a, 0]`) distinct.
    fn state(&self) -> u64 {
        let mut h = mix64(self.seed ^ GOLDEN_GAMMA);
        for &x in &self.path {
            h = mix64(h ^ x.wrapping_mul(GOLDEN_GAMMA));
        }
        mix64(h ^ (self.path.len() as u64).wrapping_mul(0xD134_2543_DE82_EF95))
    }
}

/// Counter-based stream of standard normal draws.
///
/// The sequence is a pure function of `(key, counter)`; each normal advances
/// the counter by exactly one, so any draw can be replayed by index.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    state: u64,
    counter: u64,
}

impl GaussianStream {
    pub fn new(key: &StreamKey) -> Self {
        GaussianStream { state: key.state(), counter: 0 }
    }

    /// Position of the next draw.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    #[inline]
    fn raw_u64(&mut self) -> u64 {
        let n = self.counter;
        self.counter += 1;
        mix64(self.state.wrapping_add(n.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform draw on the open interval (0, 1), centred on the 53-bit grid.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        ((self.raw_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal draw via the inverse CDF.
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        inverse_normal_cdf(self.next_uniform())
    }
}

/// Errors from the Brownian primitives.
#[derive(Debug, Error, PartialEq)]
pub enum BridgeError {
    #[error("invalid interval: t_left={t_left} must be < t_right={t_right}")]
    InvalidInterval { t_left: f64, t_right: f64 },
}

/// Midpoint of a Brownian bridge.
///
/// Given `W(t_left) = w_left` and `W(t_right) = w_right`, the conditional law
/// of the midpoint value is normal with mean `(w_left + w_right) / 2` and
/// variance `(t_right - t_left) / 4`; `z` supplies the standard normal draw.
pub fn brownian_bridge_midpoint(
    w_left: f64,
    w_right: f64,
    t_left: f64,
    t_right: f64,
    z: f64,
) -> Result<f64, BridgeError> {
    if !(t_left < t_right) {
        return Err(BridgeError::InvalidInterval { t_left, t_right });
    }
    Ok(0.5 * (w_left + w_right) + z * (0.25 * (t_right - t_left)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_deterministic_and_distinct() {
        let k = StreamKey::new(42);
        assert_eq!(k.derive(0), k.derive(0));
        assert_ne!(k.derive(0), k.derive(1));
        assert_ne!(k.derive(0).state(), k.derive(1).state());
        // Prefix keys must not collide with extended keys.
        assert_ne!(k.derive(0).state(), k.derive(0).derive(0).state());
    }

    #[test]
    fn identical_stream_state_gives_identical_draw() {
        let k = StreamKey::new(7).derive(3).derive(1);
        let mut a = GaussianStream::new(&k);
        let mut b = GaussianStream::new(&k);
        for _ in 0..100 {
            assert_eq!(a.next_normal().to_bits(), b.next_normal().to_bits());
        }
    }

    #[test]
    fn counter_advances_once_per_normal() {
        let k = StreamKey::new(1);
        let mut s = GaussianStream::new(&k);
        assert_eq!(s.counter(), 0);
        s.next_normal();
        assert_eq!(s.counter(), 1);
        s.next_normal();
        assert_eq!(s.counter(), 2);
    }

    #[test]
    fn bridge_trivial_values() {
        // Mean of the bridge with z = 0.
        assert_eq!(brownian_bridge_midpoint(0.0, 1.0, 0.0, 1.0, 0.0), Ok(0.5));
        // Conditional standard deviation sqrt(1/4) = 0.5.
        assert_eq!(brownian_bridge_midpoint(0.0, 0.0, 0.0, 1.0, 1.0), Ok(0.5));
    }

    #[test]
    fn bridge_rejects_bad_interval() {
        assert!(brownian_bridge_midpoint(0.0, 0.0, 1.0, 1.0, 0.0).is_err());
        assert!(brownian_bridge_midpoint(0.0, 0.0, 2.0, 1.0, 0.0).is_err());
    }
}
