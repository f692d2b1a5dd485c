//! Seedable streams of i.i.d. standard-normal variates.
//!
//! Generator: ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`). The 64-bit
//! seed is expanded into the 256-bit key by `SeedableRng::seed_from_u64`, and
//! every stream owns a 64-bit ChaCha stream id ("lane"). Root streams use
//! lane 0; [`NoiseStream::substream`] derives child lanes by SplitMix64
//! hashing of `(parent lane, index)`, so a substream is a pure function of
//! `(seed, parent lane, index)`.
//!
//! Normal variates come from the Ziggurat sampler of `rand_distr`
//! (`StandardNormal`). One call to [`GaussianSource::next_gaussian`] is one ε.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Anything that hands out standard-normal draws one at a time.
///
/// The generators in this crate are written against this trait so tests can
/// inject a scripted ε sequence.
pub trait GaussianSource {
    fn next_gaussian(&mut self) -> f64;

    /// Number of draws consumed so far.
    fn position(&self) -> u64;
}

impl<T: GaussianSource + ?Sized> GaussianSource for &mut T {
    fn next_gaussian(&mut self) -> f64 {
        (**self).next_gaussian()
    }

    fn position(&self) -> u64 {
        (**self).position()
    }
}

/// A deterministic stream of standard-normal draws.
///
/// Single owner: draw from one thread at a time. For parallel work hand each
/// worker its own [`substream`](Self::substream).
#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    lane: u64,
    position: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self::with_lane(seed, 0)
    }

    fn with_lane(seed: u64, lane: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(lane);
        Self {
            seed,
            lane,
            position: 0,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn lane(&self) -> u64 {
        self.lane
    }

    /// A fresh stream at position 0, independent of `self` and of every other
    /// index. Does not advance `self`.
    pub fn substream(&self, index: u64) -> NoiseStream {
        let lane = splitmix64(splitmix64(self.lane) ^ index.wrapping_add(1));
        Self::with_lane(self.seed, lane)
    }
}

impl GaussianSource for NoiseStream {
    fn next_gaussian(&mut self) -> f64 {
        self.position += 1;
        StandardNormal.sample(&mut self.rng)
    }

    fn position(&self) -> u64 {
        self.position
    }
}

/// Replays a fixed list of ε values. Panics when exhausted.
#[derive(Debug, Clone)]
pub struct ScriptedNoise {
    values: Vec<f64>,
    position: u64,
}

impl ScriptedNoise {
    pub fn new(values: impl Into<Vec<f64>>) -> Self {
        Self {
            values: values.into(),
            position: 0,
        }
    }

    /// `len` copies of the same value.
    pub fn constant(value: f64, len: usize) -> Self {
        Self::new(vec![value; len])
    }
}

impl GaussianSource for ScriptedNoise {
    fn next_gaussian(&mut self) -> f64 {
        let v = *self
            .values
            .get(self.position as usize)
            .expect("scripted noise exhausted");
        self.position += 1;
        v
    }

    fn position(&self) -> u64 {
        self.position
    }
}

/// SplitMix64 finalizer (Steele, Lea & Flood).
pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn take(stream: &mut NoiseStream, n: usize) -> Vec<f64> {
        (0..n).map(|_| stream.next_gaussian()).collect()
    }

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn equal_seeds_are_bit_identical() {
        let a = take(&mut NoiseStream::new(42), 1000);
        let b = take(&mut NoiseStream::new(42), 1000);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn distinct_seeds_differ() {
        let a = NoiseStream::new(42).next_gaussian();
        let b = NoiseStream::new(43).next_gaussian();
        assert_ne!(a, b);
    }

    #[test]
    fn zero_seed_is_valid() {
        let mut s = NoiseStream::new(0);
        assert_eq!(s.position(), 0);
        assert!(s.next_gaussian().is_finite());
        assert_eq!(s.seed(), 0);
    }

    #[test]
    fn position_counts_draws() {
        let mut s = NoiseStream::new(9);
        for i in 1..=17 {
            s.next_gaussian();
            assert_eq!(s.position(), i);
        }
    }

    #[test]
    fn moments_of_a_million_draws() {
        let n = 1_000_000;
        let xs = take(&mut NoiseStream::new(2024), n);
        let (mean, var) = mean_var(&xs);
        assert!(mean.abs() < 0.004, "mean {mean}");
        assert!((var - 1.0).abs() < 0.006, "variance {var}");
        let tail = xs.iter().filter(|x| x.abs() > 1.96).count() as f64 / n as f64;
        // P(|Z| > 1.96) = 0.04999579
        assert!((tail - 0.05).abs() < 0.001, "tail {tail}");
    }

    #[test]
    fn substreams_are_uncorrelated() {
        let root = NoiseStream::new(5);
        let n = 100_000;
        let a = take(&mut root.substream(0), n);
        let b = take(&mut root.substream(1), n);
        let (ma, va) = mean_var(&a);
        let (mb, vb) = mean_var(&b);
        let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n as f64 - 1.0);
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() < 0.013, "corr {corr}");
    }

    #[test]
    fn substream_is_deterministic_and_leaves_parent_untouched() {
        let root = NoiseStream::new(77);
        let a = take(&mut root.substream(3), 100);
        let b = take(&mut root.substream(3), 100);
        assert_eq!(a, b);
        assert_eq!(root.position(), 0);
        let c = take(&mut root.substream(4), 100);
        assert_ne!(a, c);
        // Children of different parents with the same index differ too.
        let d = take(&mut root.substream(3).substream(3), 100);
        assert_ne!(a, d);
    }

    #[test]
    fn pooled_substreams_pass_moment_checks() {
        let root = NoiseStream::new(11);
        let pooled: Vec<f64> = (0..100)
            .flat_map(|k| take(&mut root.substream(k), 10_000))
            .collect();
        let (mean, var) = mean_var(&pooled);
        assert!(mean.abs() < 0.004, "mean {mean}");
        assert!((var - 1.0).abs() < 0.006, "variance {var}");
    }

    #[test]
    fn scripted_noise_replays() {
        let mut s = ScriptedNoise::new(vec![1.0, -2.0]);
        assert_eq!(s.next_gaussian(), 1.0);
        assert_eq!(s.next_gaussian(), -2.0);
        assert_eq!(s.position(), 2);
    }

    #[test]
    #[should_panic(expected = "exhausted")]
    fn scripted_noise_panics_when_empty() {
        ScriptedNoise::new(Vec::new()).next_gaussian();
    }
}
