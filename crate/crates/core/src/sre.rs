//! Scalar stochastic recurrence engines.
//!
//! Index convention: the coefficient pair carries the time of the state it
//! produces,
//!
//! ```text
//! linear:  X_t = A_t · X_{t−1}  + B_t
//! abs:     X_t = A_t · |X_{t−1}| + B_t
//! ```
//!
//! so a trajectory started at `X_0` consumes `(A_1, B_1), (A_2, B_2), …`.
//!
//! Coefficients come in two flavours. The forward engines ([`iterate_linear`],
//! [`iterate_abs`], [`series_solution`]) pull pairs sequentially from one
//! stream. The backward constructions ([`partial_solution`],
//! [`dominating_sequence`]) need the value at calendar time `t` to be the same
//! no matter where a run starts, so they read pairs from [`TimeIndexedCoeffs`],
//! which derives the pair at time `t` from `substream(t)`.

use serde::Serialize;
use thiserror::Error;

use crate::cloud::CloudParams;
use crate::noise::{GaussianSource, NoiseStream};
use crate::special_fn::expected_log_abs_std_normal;

/// States with magnitude above this (or non-finite) stop a run.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// AR(1) moving-average sums stop once `|ρ|^j` drops below this.
const AR_TRUNCATION: f64 = 1e-17;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SreError {
    #[error("invalid coefficient process: {0}")]
    InvalidCoeffs(String),
    #[error("step count must be at least 1")]
    ZeroSteps,
    #[error("start offset k must be at least 1")]
    ZeroOffset,
    #[error("time {n} lies before the start time {start}")]
    TimeBeforeStart { n: i64, start: i64 },
    #[error("series tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("coefficient product still {last_weight:e} after {k_max} terms; series may not be summable")]
    NonSummable { k_max: usize, last_weight: f64 },
    #[error("state exceeded {DIVERGENCE_THRESHOLD:e} at time {time} (value {value:e})")]
    Diverged { time: i64, value: f64 },
}

/// Distribution of the multiplicative coefficient `A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ACoeff {
    Const { value: f64 },
    /// `A = scale · ε`.
    Gaussian { scale: f64 },
}

impl ACoeff {
    /// Exact `E[log|A|]` where one is known; `None` for `A ≡ 0`.
    pub fn log_moment(&self) -> Option<f64> {
        match *self {
            ACoeff::Const { value: 0.0 } => None,
            ACoeff::Const { value } => Some(value.abs().ln()),
            ACoeff::Gaussian { scale } => {
                Some(scale.abs().ln() + expected_log_abs_std_normal().value)
            }
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, ACoeff::Gaussian { .. })
    }

    /// One draw; constants consume no noise.
    pub fn sample<N: GaussianSource>(&self, noise: &mut N) -> f64 {
        match *self {
            ACoeff::Const { value } => value,
            ACoeff::Gaussian { scale } => scale * noise.next_gaussian(),
        }
    }

    fn scaled(&self, eps: f64) -> f64 {
        match *self {
            ACoeff::Const { value } => value,
            ACoeff::Gaussian { scale } => scale * eps,
        }
    }
}

/// How a finite cloud schedule continues past its last entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CloudExtension {
    /// Repeat the final entry (`En_1`) forever.
    HoldLast,
    /// i.i.d. `N(En_1, sd²)`.
    IidGaussian { sd: f64 },
    /// Stationary AR(1) around `En_1`.
    Ar1 { rho: f64, sd: f64 },
}

/// Distribution of the additive coefficient `B`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BCoeff {
    Const { value: f64 },
    Gaussian { mean: f64, sd: f64 },
    /// `B_t = mean + rho·(B_{t−1} − mean) + sd·η_t`, started in its stationary law.
    Ar1 { mean: f64, rho: f64, sd: f64 },
    /// `B_t = schedule[t − 1]` for `1 ≤ t ≤ len`, then `extension`.
    Cloud {
        schedule: Vec<f64>,
        extension: CloudExtension,
    },
}

impl BCoeff {
    /// The `(mean, rho, sd)` of the stationary AR(1) this source follows at
    /// time `t`, or `None` when the value is not autoregressive there.
    fn ar1_at(&self, t: i64) -> Option<(f64, f64, f64)> {
        match self {
            BCoeff::Ar1 { mean, rho, sd } => Some((*mean, *rho, *sd)),
            BCoeff::Cloud {
                schedule,
                extension: CloudExtension::Ar1 { rho, sd },
            } if !in_schedule(schedule, t) => Some((*schedule.last().unwrap(), *rho, *sd)),
            _ => None,
        }
    }
}

fn in_schedule(schedule: &[f64], t: i64) -> bool {
    t >= 1 && (t as u64) <= schedule.len() as u64
}

/// A source of coefficient pairs `(A_t, B_t)` with `A` independent of `B`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoeffProcess {
    a: ACoeff,
    b: BCoeff,
}

impl CoeffProcess {
    pub fn new(a: ACoeff, b: BCoeff) -> Result<Self, SreError> {
        let bad = |msg: String| Err(SreError::InvalidCoeffs(msg));
        match a {
            ACoeff::Const { value } if !value.is_finite() => return bad(format!("A = {value}")),
            ACoeff::Gaussian { scale } if !(scale.is_finite() && scale >= 0.0) => {
                return bad(format!("A scale {scale} must be finite and nonnegative"))
            }
            _ => {}
        }
        let check_sd = |sd: f64| sd.is_finite() && sd >= 0.0;
        let check_rho = |rho: f64| rho.is_finite() && rho.abs() < 1.0;
        match &b {
            BCoeff::Const { value } if !value.is_finite() => return bad(format!("B = {value}")),
            BCoeff::Gaussian { mean, sd } if !(mean.is_finite() && check_sd(*sd)) => {
                return bad(format!("B ~ N({mean}, {sd}²)"))
            }
            BCoeff::Ar1 { mean, rho, sd } => {
                if !check_rho(*rho) {
                    return bad(format!("AR(1) coefficient {rho} needs |rho| < 1"));
                }
                if !(mean.is_finite() && check_sd(*sd)) {
                    return bad(format!("AR(1) mean {mean}, sd {sd}"));
                }
            }
            BCoeff::Cloud {
                schedule,
                extension,
            } => {
                if schedule.is_empty() || schedule.iter().any(|v| !v.is_finite()) {
                    return bad("cloud schedule must be non-empty and finite".into());
                }
                match *extension {
                    CloudExtension::HoldLast => {}
                    CloudExtension::IidGaussian { sd } if check_sd(sd) => {}
                    CloudExtension::Ar1 { rho, sd } if check_rho(rho) && check_sd(sd) => {}
                    other => return bad(format!("cloud extension {other:?}")),
                }
            }
            _ => {}
        }
        Ok(Self { a, b })
    }

    pub fn constant(a: f64, b: f64) -> Result<Self, SreError> {
        Self::new(ACoeff::Const { value: a }, BCoeff::Const { value: b })
    }

    /// `A = scale·ε`, `B ≡ b`.
    pub fn gaussian_a(scale: f64, b: f64) -> Result<Self, SreError> {
        Self::new(ACoeff::Gaussian { scale }, BCoeff::Const { value: b })
    }

    /// The cloud model as an abs-form recursion: `A = ε`, `B_t = En_{p−t+1}`
    /// for `t = 1..=p`, continued by `extension`. Started from `X_0 = He`,
    /// the state `X_p` is a drop.
    pub fn cloud(params: &CloudParams, extension: CloudExtension) -> Result<Self, SreError> {
        Self::new(
            ACoeff::Gaussian { scale: 1.0 },
            BCoeff::Cloud {
                schedule: params.offsets_innermost_first().collect(),
                extension,
            },
        )
    }

    pub fn a(&self) -> &ACoeff {
        &self.a
    }

    pub fn b(&self) -> &BCoeff {
        &self.b
    }

    pub fn sampler<N: GaussianSource>(&self, noise: N) -> CoeffSampler<'_, N> {
        CoeffSampler {
            process: self,
            noise,
            time: 0,
            ar_state: None,
        }
    }
}

/// Sequential draws of `(A_t, B_t)` for `t = 1, 2, …` from one noise source.
///
/// Per step, `A` is drawn before `B`; constant parts consume nothing.
#[derive(Debug)]
pub struct CoeffSampler<'a, N> {
    process: &'a CoeffProcess,
    noise: N,
    time: i64,
    ar_state: Option<f64>,
}

impl<N: GaussianSource> CoeffSampler<'_, N> {
    pub fn next_pair(&mut self) -> (f64, f64) {
        self.time += 1;
        let a = self.process.a.sample(&mut self.noise);
        let b = self.next_b();
        (a, b)
    }

    /// Draw only the `B` part, advancing time.
    pub fn next_b_only(&mut self) -> f64 {
        self.time += 1;
        self.next_b()
    }

    pub fn noise(&self) -> &N {
        &self.noise
    }

    fn next_b(&mut self) -> f64 {
        let t = self.time;
        if let Some((mean, rho, sd)) = self.process.b.ar1_at(t) {
            let eta = self.noise.next_gaussian();
            let next = match self.ar_state {
                Some(prev) => mean + rho * (prev - mean) + sd * eta,
                None => mean + sd / (1.0 - rho * rho).sqrt() * eta,
            };
            self.ar_state = Some(next);
            return next;
        }
        match &self.process.b {
            BCoeff::Const { value } => *value,
            BCoeff::Gaussian { mean, sd } => mean + sd * self.noise.next_gaussian(),
            BCoeff::Cloud {
                schedule,
                extension,
            } => {
                if in_schedule(schedule, t) {
                    return schedule[(t - 1) as usize];
                }
                let last = *schedule.last().unwrap();
                match *extension {
                    CloudExtension::HoldLast => last,
                    CloudExtension::IidGaussian { sd } => last + sd * self.noise.next_gaussian(),
                    CloudExtension::Ar1 { .. } => unreachable!("handled as AR(1) above"),
                }
            }
            BCoeff::Ar1 { .. } => unreachable!("handled as AR(1) above"),
        }
    }
}

/// Coefficients addressed by calendar time: the pair at time `t` is a pure
/// function of `(seed, lane, t)`.
///
/// Time `t` reads two draws from `base.substream(zigzag(t))`: the first drives
/// `A_t`, the second is the innovation of `B_t`. AR(1) sources are evaluated
/// through their moving-average form `B_t = m + s·Σ_j ρ^j η_{t−j}`, truncated
/// once `|ρ|^j < 1e-17`.
#[derive(Debug, Clone)]
pub struct TimeIndexedCoeffs {
    process: CoeffProcess,
    base: NoiseStream,
}

impl TimeIndexedCoeffs {
    pub fn new(process: CoeffProcess, base: &NoiseStream) -> Self {
        Self {
            process,
            base: base.clone(),
        }
    }

    pub fn process(&self) -> &CoeffProcess {
        &self.process
    }

    fn eps_at(&self, t: i64) -> (f64, f64) {
        let mut s = self.base.substream(zigzag(t));
        let ea = s.next_gaussian();
        let eb = s.next_gaussian();
        (ea, eb)
    }

    fn ar_depth(rho: f64) -> i64 {
        if rho == 0.0 {
            return 0;
        }
        (AR_TRUNCATION.ln() / rho.abs().ln()).ceil() as i64
    }

    fn b_from(&self, t: i64, eta: impl Fn(i64) -> f64) -> f64 {
        if let Some((mean, rho, sd)) = self.process.b.ar1_at(t) {
            let depth = Self::ar_depth(rho);
            let mut acc = 0.0;
            let mut w = 1.0;
            for j in 0..=depth {
                acc += w * eta(t - j);
                w *= rho;
            }
            return mean + sd * acc;
        }
        match &self.process.b {
            BCoeff::Const { value } => *value,
            BCoeff::Gaussian { mean, sd } => mean + sd * eta(t),
            BCoeff::Cloud {
                schedule,
                extension,
            } => {
                if in_schedule(schedule, t) {
                    return schedule[(t - 1) as usize];
                }
                let last = *schedule.last().unwrap();
                match *extension {
                    CloudExtension::HoldLast => last,
                    CloudExtension::IidGaussian { sd } => last + sd * eta(t),
                    CloudExtension::Ar1 { .. } => unreachable!("handled as AR(1) above"),
                }
            }
            BCoeff::Ar1 { .. } => unreachable!("handled as AR(1) above"),
        }
    }

    /// `(A_t, B_t)`.
    pub fn pair_at(&self, t: i64) -> (f64, f64) {
        let (ea, _) = self.eps_at(t);
        let a = self.process.a.scaled(ea);
        let b = self.b_from(t, |s| self.eps_at(s).1);
        (a, b)
    }

    /// All pairs for times `first..=last`, sharing one pass over the noise.
    /// Each entry equals [`pair_at`](Self::pair_at) bit for bit.
    pub fn window(&self, first: i64, last: i64) -> CoeffWindow {
        if last < first {
            return CoeffWindow {
                first,
                pairs: Vec::new(),
            };
        }
        let lookback = (first..=last)
            .filter_map(|t| self.process.b.ar1_at(t))
            .map(|(_, rho, _)| Self::ar_depth(rho))
            .max()
            .unwrap_or(0);
        let eps_first = first - lookback;
        let eps: Vec<(f64, f64)> = (eps_first..=last).map(|t| self.eps_at(t)).collect();
        let eta = |s: i64| eps[(s - eps_first) as usize].1;
        let pairs = (first..=last)
            .map(|t| {
                let a = self.process.a.scaled(eps[(t - eps_first) as usize].0);
                (a, self.b_from(t, eta))
            })
            .collect();
        CoeffWindow { first, pairs }
    }
}

/// A contiguous block of time-indexed coefficient pairs.
#[derive(Debug, Clone)]
pub struct CoeffWindow {
    first: i64,
    pairs: Vec<(f64, f64)>,
}

impl CoeffWindow {
    pub fn first(&self) -> i64 {
        self.first
    }

    pub fn last(&self) -> i64 {
        self.first + self.pairs.len() as i64 - 1
    }

    /// Panics when `t` lies outside the window.
    pub fn pair(&self, t: i64) -> (f64, f64) {
        self.pairs[(t - self.first) as usize]
    }
}

fn zigzag(t: i64) -> u64 {
    ((t << 1) ^ (t >> 63)) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    Linear,
    Abs,
}

impl Form {
    #[inline]
    pub fn step(self, a: f64, x: f64, b: f64) -> f64 {
        match self {
            Form::Linear => a * x + b,
            Form::Abs => a * x.abs() + b,
        }
    }
}

/// A realization `X_0, …, X_N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub values: Vec<f64>,
    pub x0: f64,
    pub seed: u64,
    pub form: Form,
    /// Index of the first state beyond [`DIVERGENCE_THRESHOLD`]; the values
    /// end there.
    pub diverged_at: Option<usize>,
}

impl Trajectory {
    pub fn last(&self) -> f64 {
        *self.values.last().expect("trajectories hold at least X_0")
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

#[inline]
pub(crate) fn is_diverged(x: f64) -> bool {
    !(x.abs() <= DIVERGENCE_THRESHOLD)
}

/// Run `form` for `n` steps from `x0`, drawing coefficients from `noise`.
pub fn iterate<N: GaussianSource>(
    form: Form,
    coeffs: &CoeffProcess,
    x0: f64,
    n: usize,
    noise: N,
    seed: u64,
) -> Result<Trajectory, SreError> {
    if n == 0 {
        return Err(SreError::ZeroSteps);
    }
    let mut sampler = coeffs.sampler(noise);
    let mut values = Vec::with_capacity(n + 1);
    values.push(x0);
    let mut x = x0;
    let mut diverged_at = None;
    for t in 1..=n {
        let (a, b) = sampler.next_pair();
        x = form.step(a, x, b);
        values.push(x);
        if is_diverged(x) {
            diverged_at = Some(t);
            break;
        }
    }
    Ok(Trajectory {
        values,
        x0,
        seed,
        form,
        diverged_at,
    })
}

/// `X_t = A_t X_{t−1} + B_t` for `t = 1..=n`.
pub fn iterate_linear(
    coeffs: &CoeffProcess,
    x0: f64,
    n: usize,
    stream: &mut NoiseStream,
) -> Result<Trajectory, SreError> {
    let seed = stream.seed();
    iterate(Form::Linear, coeffs, x0, n, stream, seed)
}

/// `X_t = A_t |X_{t−1}| + B_t` for `t = 1..=n`.
pub fn iterate_abs(
    coeffs: &CoeffProcess,
    x0: f64,
    n: usize,
    stream: &mut NoiseStream,
) -> Result<Trajectory, SreError> {
    let seed = stream.seed();
    iterate(Form::Abs, coeffs, x0, n, stream, seed)
}

/// Truncated backward series of the linear recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesApprox {
    pub value: f64,
    pub terms_used: usize,
    /// `|A_{n−1} ⋯ A_{n−K}|`, the weight the first omitted term would carry.
    pub last_weight: f64,
}

/// `X_n = Σ_{k≥0} (A_{n−1} ⋯ A_{n−k}) B_{n−k−1}`, summed over a freshly drawn
/// history `(A_{n−1}, B_{n−1}), (A_{n−2}, B_{n−2}), …` until the running
/// product falls below `tol`.
///
/// The history is drawn by stepping the sampler; the built-in sources are
/// i.i.d. or Gaussian AR(1), whose laws are invariant under time reversal.
pub fn series_solution(
    coeffs: &CoeffProcess,
    stream: &mut NoiseStream,
    k_max: usize,
    tol: f64,
) -> Result<SeriesApprox, SreError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(SreError::InvalidTolerance(tol));
    }
    if k_max == 0 {
        return Err(SreError::ZeroSteps);
    }
    let mut sampler = coeffs.sampler(stream);
    let mut value = 0.0;
    let mut weight: f64 = 1.0;
    for k in 0..k_max {
        let (a, b) = sampler.next_pair();
        value += weight * b;
        weight *= a;
        if weight.abs() < tol {
            return Ok(SeriesApprox {
                value,
                terms_used: k + 1,
                last_weight: weight.abs(),
            });
        }
    }
    Err(SreError::NonSummable {
        k_max,
        last_weight: weight.abs(),
    })
}

fn check_start(k: u64, n: i64) -> Result<i64, SreError> {
    if k == 0 {
        return Err(SreError::ZeroOffset);
    }
    let start = -(k as i64);
    if n < start {
        return Err(SreError::TimeBeforeStart { n, start });
    }
    Ok(start)
}

/// Window covering every coefficient a run from `−k` to `n` touches.
pub fn window_for(coeffs: &TimeIndexedCoeffs, k: u64, n: i64) -> Result<CoeffWindow, SreError> {
    let start = check_start(k, n)?;
    Ok(coeffs.window(start + 1, n))
}

/// The partial solution `X^{(−k)}_t` for `t = −k..=n`: zero at time `−k`, then
/// the abs recursion on the time-indexed coefficients in `window`.
pub fn partial_path(window: &CoeffWindow, k: u64, n: i64) -> Result<Vec<f64>, SreError> {
    run_from_zero(window, k, n, |a, x, b| a * x.abs() + b)
}

/// The dominating sequence `Y_t` for `t = −k..=n`: `Y_{−k} = 0`,
/// `Y_t = |A_t| Y_{t−1} + |B_t|` on the same coefficients as [`partial_path`].
pub fn dominating_path(window: &CoeffWindow, k: u64, n: i64) -> Result<Vec<f64>, SreError> {
    run_from_zero(window, k, n, |a, y, b| a.abs() * y + b.abs())
}

fn run_from_zero(
    window: &CoeffWindow,
    k: u64,
    n: i64,
    step: impl Fn(f64, f64, f64) -> f64,
) -> Result<Vec<f64>, SreError> {
    let start = check_start(k, n)?;
    let mut path = Vec::with_capacity((n - start + 1) as usize);
    let mut x = 0.0;
    path.push(x);
    for t in start + 1..=n {
        let (a, b) = window.pair(t);
        x = step(a, x, b);
        if is_diverged(x) {
            return Err(SreError::Diverged { time: t, value: x });
        }
        path.push(x);
    }
    Ok(path)
}

/// `X^{(−k)}_n`, the abs recursion started from zero at time `−k`.
///
/// Coefficients at each calendar time are shared across all `k` for a given
/// stream, so partial solutions with different `k` can be compared pathwise.
pub fn partial_solution(
    coeffs: &CoeffProcess,
    k: u64,
    n: i64,
    stream: &NoiseStream,
) -> Result<f64, SreError> {
    let indexed = TimeIndexedCoeffs::new(coeffs.clone(), stream);
    let window = window_for(&indexed, k, n)?;
    Ok(*partial_path(&window, k, n)?.last().unwrap())
}

/// `Y_n` of the dominating recursion started from zero at time `−k`.
pub fn dominating_sequence(
    coeffs: &CoeffProcess,
    k: u64,
    n: i64,
    stream: &NoiseStream,
) -> Result<f64, SreError> {
    let indexed = TimeIndexedCoeffs::new(coeffs.clone(), stream);
    let window = window_for(&indexed, k, n)?;
    Ok(*dominating_path(&window, k, n)?.last().unwrap())
}
