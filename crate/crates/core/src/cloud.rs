//! The p-order Gaussian cloud model.
//!
//! A drop is produced by `p` nested Gaussian draws. The innermost draw is
//! centred on `En_p` with standard deviation `He`; each later draw is centred on
//! the next `En` towards `En_1` and uses the absolute value of the previous
//! draw as its standard deviation. The last draw is the drop.
//!
//! Two generators are provided. [`gen_drop_def1`] calls a Gaussian sampler
//! `R_N(μ, σ)` at every level; [`gen_drop_def2`] writes the same recursion with
//! the noise made explicit, `x_i = En_{p−i+1} + |x_{i−1}|·ε_i`. With
//! `R_N(μ, σ) = μ + σ·ε` both consume one ε per level and agree bit for bit.

use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::noise::{GaussianSource, NoiseStream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CloudError {
    #[error("hyper-entropy He must be positive and finite, got {0}")]
    NonPositiveHe(f64),
    #[error("a cloud model needs at least one En value")]
    EmptyEn,
    #[error("En_{index} is not finite ({value})")]
    NonFiniteEn { index: usize, value: f64 },
    #[error("drop count must be at least 1")]
    ZeroDrops,
}

/// Numerical characteristics `En_1, …, En_p, He` of a p-order cloud model.
///
/// `en[0]` is `En_1 = Ex`, the expectation. `En` values may be zero or
/// negative; only `He` is sign-constrained.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudParams {
    en: Vec<f64>,
    he: f64,
}

impl CloudParams {
    pub fn new(en: Vec<f64>, he: f64) -> Result<Self, CloudError> {
        validate(Self { en, he })
    }

    /// `En_1, …, En_p` in that order.
    pub fn en(&self) -> &[f64] {
        &self.en
    }

    pub fn he(&self) -> f64 {
        self.he
    }

    pub fn order(&self) -> usize {
        self.en.len()
    }

    /// `Ex = En_1`.
    pub fn expectation(&self) -> f64 {
        self.en[0]
    }

    /// `En_i` with the 1-based index used in the model definition.
    pub fn en_at(&self, i: usize) -> f64 {
        self.en[i - 1]
    }

    /// The additive terms met by the recursion, innermost first:
    /// `[En_p, En_{p−1}, …, En_1]`.
    pub fn offsets_innermost_first(&self) -> impl Iterator<Item = f64> + '_ {
        self.en.iter().rev().copied()
    }
}

impl Serialize for CloudParams {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("CloudParams", 3)?;
        s.serialize_field("en", &self.en)?;
        s.serialize_field("he", &self.he)?;
        s.serialize_field("p", &self.order())?;
        s.end()
    }
}

pub fn validate(params: CloudParams) -> Result<CloudParams, CloudError> {
    if !(params.he > 0.0 && params.he.is_finite()) {
        return Err(CloudError::NonPositiveHe(params.he));
    }
    if params.en.is_empty() {
        return Err(CloudError::EmptyEn);
    }
    if let Some((i, &v)) = params.en.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(CloudError::NonFiniteEn {
            index: i + 1,
            value: v,
        });
    }
    Ok(params)
}

/// Which generator produced a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Definition {
    /// Nested Gaussian sampler calls.
    Def1,
    /// Reparameterized recursion with explicit ε.
    Def2,
}

/// `R_N(μ, σ)`: one Gaussian realization with mean `mu` and standard deviation
/// `sigma`. `sigma = 0` returns `mu` but still consumes a draw.
pub fn gaussian_realization<N: GaussianSource>(mu: f64, sigma: f64, noise: &mut N) -> f64 {
    mu + sigma * noise.next_gaussian()
}

/// One drop through nested `R_N` calls. Consumes exactly `p` draws.
pub fn gen_drop_def1<N: GaussianSource>(params: &CloudParams, noise: &mut N) -> f64 {
    let p = params.order();
    let mut x = gaussian_realization(params.en_at(p), params.he, noise);
    for i in 2..=p {
        x = gaussian_realization(params.en_at(p - (i - 1)), x.abs(), noise);
    }
    x
}

/// One drop through the reparameterized recursion. Consumes exactly `p` draws.
pub fn gen_drop_def2<N: GaussianSource>(params: &CloudParams, noise: &mut N) -> f64 {
    let mut offsets = params.offsets_innermost_first();
    let first = offsets.next().expect("validated params have p >= 1");
    let mut x = first + params.he * noise.next_gaussian();
    for en in offsets {
        x = en + x.abs() * noise.next_gaussian();
    }
    x
}

pub fn gen_drop<N: GaussianSource>(params: &CloudParams, noise: &mut N, which: Definition) -> f64 {
    match which {
        Definition::Def1 => gen_drop_def1(params, noise),
        Definition::Def2 => gen_drop_def2(params, noise),
    }
}

/// A batch of drops with the metadata needed to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropBatch {
    pub params: CloudParams,
    pub seed: u64,
    pub definition: Definition,
    pub values: Vec<f64>,
}

/// `n` drops drawn one after another from `stream` (`n·p` draws in total).
pub fn gen_drops(
    params: &CloudParams,
    n: usize,
    stream: &mut NoiseStream,
    which: Definition,
) -> Result<DropBatch, CloudError> {
    if n == 0 {
        return Err(CloudError::ZeroDrops);
    }
    let values = (0..n).map(|_| gen_drop(params, stream, which)).collect();
    Ok(DropBatch {
        params: params.clone(),
        seed: stream.seed(),
        definition: which,
        values,
    })
}

/// `n` drops generated in parallel, drop `i` on `stream.substream(i)`.
///
/// The result does not depend on the thread count, but differs from
/// [`gen_drops`] on the same seed.
pub fn gen_drops_parallel(
    params: &CloudParams,
    n: usize,
    stream: &NoiseStream,
    which: Definition,
) -> Result<DropBatch, CloudError> {
    if n == 0 {
        return Err(CloudError::ZeroDrops);
    }
    let values = (0..n as u64)
        .into_par_iter()
        .map(|i| gen_drop(params, &mut stream.substream(i), which))
        .collect();
    Ok(DropBatch {
        params: params.clone(),
        seed: stream.seed(),
        definition: which,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::ScriptedNoise;

    fn params(en: &[f64], he: f64) -> CloudParams {
        CloudParams::new(en.to_vec(), he).unwrap()
    }

    #[test]
    fn validation() {
        assert!(CloudParams::new(vec![0.0], 1.0).is_ok());
        assert_eq!(
            CloudParams::new(vec![0.0], 0.0),
            Err(CloudError::NonPositiveHe(0.0))
        );
        assert!(CloudParams::new(vec![0.0], -1.0).is_err());
        assert!(CloudParams::new(vec![0.0], f64::INFINITY).is_err());
        assert_eq!(CloudParams::new(vec![], 1.0), Err(CloudError::EmptyEn));
        assert!(matches!(
            CloudParams::new(vec![1.0, f64::NAN], 1.0),
            Err(CloudError::NonFiniteEn { index: 2, .. })
        ));
        let p3 = params(&[1.0, 2.0, 3.0], 0.1);
        assert_eq!(p3.order(), 3);
        assert_eq!(p3.expectation(), 1.0);
        assert_eq!(validate(p3.clone()), Ok(p3));
    }

    #[test]
    fn negative_and_zero_en_are_allowed() {
        assert!(CloudParams::new(vec![-3.0, 0.0], 0.5).is_ok());
    }

    #[test]
    fn zero_noise_collapses_to_expectation() {
        let p1 = params(&[5.0], 2.0);
        assert_eq!(gen_drop_def1(&p1, &mut ScriptedNoise::constant(0.0, 1)), 5.0);
        let p3 = params(&[1.5, -2.0, 4.0], 0.3);
        let mut noise = ScriptedNoise::constant(0.0, 3);
        assert_eq!(gen_drop_def1(&p3, &mut noise), 1.5);
        assert_eq!(noise.position(), 3);
        assert_eq!(gen_drop_def2(&p3, &mut ScriptedNoise::constant(0.0, 3)), 1.5);
    }

    #[test]
    fn def2_by_hand() {
        let p1 = params(&[5.0], 2.0);
        assert_eq!(gen_drop_def2(&p1, &mut ScriptedNoise::new(vec![1.0])), 7.0);

        // x_1 = 3 + 1·(−3) = 0, then a degenerate σ = 0 step that still uses ε.
        let p2 = params(&[0.0, 3.0], 1.0);
        let mut noise = ScriptedNoise::new(vec![-3.0, 0.5]);
        assert_eq!(gen_drop_def2(&p2, &mut noise), 0.0);
        assert_eq!(noise.position(), 2);
        let mut noise = ScriptedNoise::new(vec![-3.0, 0.5]);
        assert_eq!(gen_drop_def1(&p2, &mut noise), 0.0);
        assert_eq!(noise.position(), 2);
    }

    #[test]
    fn def2_three_levels_by_hand() {
        // x1 = 3 + 0.5·2 = 4; x2 = −1 + 4·(−0.5) = −3; x3 = 2 + 3·1 = 5
        let p3 = params(&[2.0, -1.0, 3.0], 0.5);
        let eps = vec![2.0, -0.5, 1.0];
        assert_eq!(gen_drop_def2(&p3, &mut ScriptedNoise::new(eps.clone())), 5.0);
        assert_eq!(gen_drop_def1(&p3, &mut ScriptedNoise::new(eps)), 5.0);
    }

    #[test]
    fn definitions_agree_on_seeded_stream() {
        let p2 = params(&[0.0, 1.0], 0.5);
        let a = gen_drop_def1(&p2, &mut NoiseStream::new(7));
        let b = gen_drop_def2(&p2, &mut NoiseStream::new(7));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn batch_contract() {
        let p2 = params(&[0.0, 1.0], 0.5);
        let mut s = NoiseStream::new(3);
        let batch = gen_drops(&p2, 1000, &mut s, Definition::Def2).unwrap();
        assert_eq!(batch.values.len(), 1000);
        assert_eq!(s.position(), 2000);
        assert_eq!(batch.seed, 3);
        assert!(batch.values.iter().all(|v| v.is_finite()));
        assert_eq!(
            gen_drops(&p2, 0, &mut s, Definition::Def1),
            Err(CloudError::ZeroDrops)
        );
    }

    #[test]
    fn batches_agree_across_definitions() {
        let p = params(&[0.3, -1.0, 2.0, 0.0], 0.7);
        let a = gen_drops(&p, 500, &mut NoiseStream::new(19), Definition::Def1).unwrap();
        let b = gen_drops(&p, 500, &mut NoiseStream::new(19), Definition::Def2).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.values), bits(&b.values));
    }

    #[test]
    fn parallel_batch_uses_one_substream_per_drop() {
        let p = params(&[0.0, 1.0], 1.0);
        let root = NoiseStream::new(8);
        let batch = gen_drops_parallel(&p, 64, &root, Definition::Def2).unwrap();
        for (i, v) in batch.values.iter().enumerate() {
            let expected = gen_drop_def2(&p, &mut root.substream(i as u64));
            assert_eq!(v.to_bits(), expected.to_bits());
        }
    }

    #[test]
    fn sample_mean_matches_expectation() {
        // Var(x_2) = E[x_1²] = En_2² + He² = 1.01
        let p = params(&[0.0, 1.0], 0.1);
        let n = 1_000_000;
        let batch = gen_drops(&p, n, &mut NoiseStream::new(99), Definition::Def2).unwrap();
        let mean = batch.values.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 * (1.01_f64 / n as f64).sqrt(), "mean {mean}");
    }
}
