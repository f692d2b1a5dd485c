//! Empirical checks of the stability conditions and their consequences.
//!
//! * [`estimate_lyapunov`] and [`estimate_logplus_b`] estimate `E[log|A|]`
//!   and `E[log⁺|B|]`.
//! * [`coupling_decay`] runs two abs-form copies on one coefficient path and
//!   checks `|Δ_t| ≤ |A_t| |Δ_{t−1}|` at every step.
//! * [`stationarity_test`] and [`fixed_point_check`] compare marginals with
//!   two-sample KS tests.
//!
//! Acceptance bands are four standard errors throughout.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::noise::NoiseStream;
use crate::sre::{is_diverged, ACoeff, BCoeff, CoeffProcess, Form, SreError};
use crate::stats::{self, KsOutcome, Moments};

/// Default burn-in for unit-scale Gaussian coefficients.
pub const DEFAULT_BURN_IN: usize = 500;
/// Relative slack on the contraction inequality, scaled by the size of the
/// operands so that rounding in `A|X| + B` is not reported as a violation.
pub const CONTRACTION_RTOL: f64 = 1e-12;
/// Significance level of every KS decision.
pub const KS_ALPHA: f64 = 0.01;
/// Smallest |Δ| that enters the log-slope fit.
const SLOPE_FLOOR: f64 = 1e-300;
const MIN_REPLICAS: usize = 50;
const MIN_FIXED_POINT_SAMPLE: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("need at least {MIN_REPLICAS} replicas for KS asymptotics, got {0}")]
    TooFewReplicas(usize),
    #[error("coupled runs need distinct starting points")]
    IdenticalStarts,
    #[error("lag grid must be non-empty with positive lags")]
    InvalidLags,
    #[error("{zeros} exact zeros among {n} coefficient draws")]
    ZeroDraws { zeros: usize, n: usize },
    #[error("log|A| is -inf for A identically zero")]
    DegenerateCoefficient,
    #[error("replica {replica} crossed the divergence guard at step {step} (value {value:e})")]
    Diverged {
        replica: usize,
        step: usize,
        value: f64,
    },
    #[error(transparent)]
    Sre(#[from] SreError),
}

impl DiagnosticsError {
    /// Whether this is a numeric anomaly (divergence, degenerate draws) rather
    /// than a usage error.
    pub fn is_numeric_anomaly(&self) -> bool {
        matches!(
            self,
            DiagnosticsError::Diverged { .. }
                | DiagnosticsError::ZeroDraws { .. }
                | DiagnosticsError::DegenerateCoefficient
                | DiagnosticsError::Sre(SreError::Diverged { .. })
                | DiagnosticsError::Sre(SreError::NonSummable { .. })
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub closed_form: Option<f64>,
    /// Exact zeros that were redrawn.
    pub zero_draws: usize,
}

impl LyapunovEstimate {
    /// `|estimate − closed_form| ≤ 4·stderr`; vacuous without a closed form.
    pub fn agrees_with_closed_form(&self) -> bool {
        match self.closed_form {
            Some(c) => (self.estimate - c).abs() <= 4.0 * self.stderr,
            None => true,
        }
    }
}

fn require_samples(n: usize, needed: usize) -> Result<(), DiagnosticsError> {
    if n < needed {
        Err(DiagnosticsError::TooFewSamples { needed, got: n })
    } else {
        Ok(())
    }
}

/// Sample mean of `log|A_i|` over `n` draws and its standard error.
///
/// An exact floating-point zero is redrawn; more than `n/1000` of them is an
/// error.
pub fn estimate_lyapunov(
    a: &ACoeff,
    n: usize,
    stream: &mut NoiseStream,
) -> Result<LyapunovEstimate, DiagnosticsError> {
    require_samples(n, 1000)?;
    let closed_form = a.log_moment();
    if let ACoeff::Const { value } = *a {
        if value == 0.0 {
            return Err(DiagnosticsError::DegenerateCoefficient);
        }
        return Ok(LyapunovEstimate {
            estimate: value.abs().ln(),
            stderr: 0.0,
            closed_form,
            zero_draws: 0,
        });
    }
    let max_zeros = n / 1000;
    let mut zeros = 0;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut taken = 0;
    while taken < n {
        let draw = a.sample(stream);
        if draw == 0.0 {
            zeros += 1;
            if zeros > max_zeros {
                return Err(DiagnosticsError::ZeroDraws { zeros, n });
            }
            continue;
        }
        let l = draw.abs().ln();
        sum += l;
        sum_sq += l * l;
        taken += 1;
    }
    let (estimate, stderr) = stats::mean_and_stderr(sum, sum_sq, n);
    Ok(LyapunovEstimate {
        estimate,
        stderr,
        closed_form,
        zero_draws: zeros,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogPlusEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Sample mean of `max(log|B_i|, 0)` over `n` draws of the B-source.
///
/// For autocorrelated sources the reported standard error is the i.i.d. one
/// and understates the true sampling error.
pub fn estimate_logplus_b(
    b: &BCoeff,
    n: usize,
    stream: &mut NoiseStream,
) -> Result<LogPlusEstimate, DiagnosticsError> {
    require_samples(n, 1000)?;
    if let BCoeff::Const { value } = *b {
        return Ok(LogPlusEstimate {
            estimate: log_plus(value),
            stderr: 0.0,
        });
    }
    let process = CoeffProcess::new(ACoeff::Const { value: 0.0 }, b.clone())?;
    let mut sampler = process.sampler(stream);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let l = log_plus(sampler.next_b_only());
        sum += l;
        sum_sq += l * l;
    }
    let (estimate, stderr) = stats::mean_and_stderr(sum, sum_sq, n);
    Ok(LogPlusEstimate { estimate, stderr })
}

/// `max(log|x|, 0)`, with `log⁺ 0 = 0`.
pub fn log_plus(x: f64) -> f64 {
    let l = x.abs().ln();
    if l > 0.0 {
        l
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingResult {
    /// `Δ_t = X_t − X'_t` for `t = 0..=n`.
    pub deltas: Vec<f64>,
    /// OLS slope of `log|Δ_t|` against `t` over the pre-merge prefix.
    pub slope: Option<f64>,
    pub contraction_violations: usize,
    /// First step at which the copies coincide exactly.
    pub merged_at: Option<usize>,
}

impl CouplingResult {
    pub fn final_gap(&self) -> f64 {
        self.deltas.last().map_or(0.0, |d| d.abs())
    }
}

/// Two abs-form runs from `x0` and `x0_alt` on one coefficient realization.
pub fn coupling_decay(
    coeffs: &CoeffProcess,
    x0: f64,
    x0_alt: f64,
    n: usize,
    stream: &mut NoiseStream,
) -> Result<CouplingResult, DiagnosticsError> {
    if x0 == x0_alt {
        return Err(DiagnosticsError::IdenticalStarts);
    }
    require_samples(n, 10)?;
    let mut sampler = coeffs.sampler(stream);
    let (mut x, mut y) = (x0, x0_alt);
    let mut deltas = Vec::with_capacity(n + 1);
    deltas.push(x - y);
    let mut violations = 0;
    let mut merged_at = None;
    for t in 1..=n {
        let (a, b) = sampler.next_pair();
        let (nx, ny) = (Form::Abs.step(a, x, b), Form::Abs.step(a, y, b));
        for v in [nx, ny] {
            if is_diverged(v) {
                return Err(DiagnosticsError::Diverged {
                    replica: 0,
                    step: t,
                    value: v,
                });
            }
        }
        let prev = (x - y).abs();
        let next = nx - ny;
        let scale = a.abs() * x.abs().max(y.abs()) + b.abs();
        if next.abs() > a.abs() * prev + CONTRACTION_RTOL * scale {
            violations += 1;
        }
        if next == 0.0 && merged_at.is_none() {
            merged_at = Some(t);
        }
        deltas.push(next);
        x = nx;
        y = ny;
    }
    let prefix_end = merged_at.unwrap_or(n + 1);
    let (ts, logs): (Vec<f64>, Vec<f64>) = deltas[..prefix_end]
        .iter()
        .enumerate()
        .filter(|(_, d)| d.abs() > SLOPE_FLOOR)
        .map(|(t, d)| (t as f64, d.abs().ln()))
        .unzip();
    Ok(CouplingResult {
        slope: stats::ols_slope(&ts, &logs),
        deltas,
        contraction_violations: violations,
        merged_at,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LagKs {
    pub lag: usize,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityResult {
    pub burn_in: usize,
    pub replicas: usize,
    pub ks_stats: Vec<LagKs>,
    /// Fraction of lags with `p < 0.01`.
    pub rejection_rate: f64,
}

/// Cross-replica KS comparison of `X_{burn_in}` against `X_{burn_in + lag}`
/// for every lag in `lags`.
///
/// Replica `r` runs on `stream.substream(r)`; any replica crossing the
/// divergence guard aborts the test.
pub fn stationarity_test(
    coeffs: &CoeffProcess,
    x0: f64,
    burn_in: usize,
    lags: &[usize],
    replicas: usize,
    stream: &NoiseStream,
) -> Result<StationarityResult, DiagnosticsError> {
    if replicas < MIN_REPLICAS {
        return Err(DiagnosticsError::TooFewReplicas(replicas));
    }
    if lags.is_empty() || lags.contains(&0) {
        return Err(DiagnosticsError::InvalidLags);
    }
    let horizon = burn_in + lags.iter().max().copied().unwrap_or(0);
    let mut probe_times: Vec<usize> = std::iter::once(burn_in)
        .chain(lags.iter().map(|l| burn_in + l))
        .collect();
    probe_times.sort_unstable();
    probe_times.dedup();

    let per_replica: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut sampler = coeffs.sampler(stream.substream(r as u64));
            let mut x = x0;
            let mut probes = Vec::with_capacity(probe_times.len());
            let mut next_probe = probe_times.iter().peekable();
            for t in 0..=horizon {
                if t > 0 {
                    let (a, b) = sampler.next_pair();
                    x = Form::Abs.step(a, x, b);
                    if is_diverged(x) {
                        return Err(DiagnosticsError::Diverged {
                            replica: r,
                            step: t,
                            value: x,
                        });
                    }
                }
                if next_probe.peek() == Some(&&t) {
                    probes.push(x);
                    next_probe.next();
                }
            }
            Ok(probes)
        })
        .collect::<Result<_, _>>()?;

    let column = |time: usize| -> Vec<f64> {
        let idx = probe_times.binary_search(&time).unwrap();
        per_replica.iter().map(|p| p[idx]).collect()
    };
    let base = column(burn_in);
    let ks_stats: Vec<LagKs> = lags
        .iter()
        .map(|&lag| {
            let out = stats::ks_two_sample(&base, &column(burn_in + lag));
            LagKs {
                lag,
                statistic: out.statistic,
                p_value: out.p_value,
            }
        })
        .collect();
    let rejected = ks_stats.iter().filter(|k| k.p_value < KS_ALPHA).count();
    Ok(StationarityResult {
        burn_in,
        replicas,
        rejection_rate: rejected as f64 / ks_stats.len() as f64,
        ks_stats,
    })
}

/// Abs-form trajectories on `stream.substream(r)` for `r < replicas`, each run
/// for `steps` steps; returns the final states.
pub fn stationary_ensemble(
    coeffs: &CoeffProcess,
    x0: f64,
    steps: usize,
    replicas: usize,
    stream: &NoiseStream,
) -> Result<Vec<f64>, DiagnosticsError> {
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut sampler = coeffs.sampler(stream.substream(r as u64));
            let mut x = x0;
            for t in 1..=steps {
                let (a, b) = sampler.next_pair();
                x = Form::Abs.step(a, x, b);
                if is_diverged(x) {
                    return Err(DiagnosticsError::Diverged {
                        replica: r,
                        step: t,
                        value: x,
                    });
                }
            }
            Ok(x)
        })
        .collect()
}

/// Pushes every sample point through one abs-form step with fresh
/// coefficients and KS-compares the image with the input.
pub fn fixed_point_check(
    coeffs: &CoeffProcess,
    stationary_sample: &[f64],
    stream: &mut NoiseStream,
) -> Result<KsOutcome, DiagnosticsError> {
    require_samples(stationary_sample.len(), MIN_FIXED_POINT_SAMPLE)?;
    let mut sampler = coeffs.sampler(stream);
    let pushed: Vec<f64> = stationary_sample
        .iter()
        .map(|&x| {
            let (a, b) = sampler.next_pair();
            Form::Abs.step(a, x, b)
        })
        .collect();
    Ok(stats::ks_two_sample(stationary_sample, &pushed))
}

/// Mean, unbiased variance, skewness and excess kurtosis of a sample of at
/// least four values. Skewness and kurtosis are `None` when the variance is 0.
pub fn moments(sample: &[f64]) -> Result<Moments, DiagnosticsError> {
    require_samples(sample.len(), 4)?;
    Ok(stats::sample_moments(sample).expect("n >= 4"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    StationaryExpected,
    UnstableExpected,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityCheck {
    pub lyapunov: LyapunovEstimate,
    pub logplus_b: LogPlusEstimate,
    pub lyapunov_ok: bool,
    pub logplus_ok: bool,
    pub verdict: Verdict,
}

/// Evaluates `E[log|A|] < 0` and `E[log⁺|B|] < ∞` from `n` draws each.
///
/// The verdict is `stationary_expected` when the Lyapunov estimate plus four
/// standard errors is negative, `unstable_expected` when the estimate minus
/// four standard errors is positive, and `boundary` otherwise. Constant
/// coefficients are evaluated exactly (standard error 0).
pub fn check_stability_conditions(
    coeffs: &CoeffProcess,
    n: usize,
    stream: &mut NoiseStream,
) -> Result<StabilityCheck, DiagnosticsError> {
    require_samples(n, 10_000)?;
    let lyapunov = estimate_lyapunov(coeffs.a(), n, &mut stream.substream(0))?;
    let logplus_b = estimate_logplus_b(coeffs.b(), n, &mut stream.substream(1))?;
    let upper = lyapunov.estimate + 4.0 * lyapunov.stderr;
    let lower = lyapunov.estimate - 4.0 * lyapunov.stderr;
    let verdict = if upper < 0.0 {
        Verdict::StationaryExpected
    } else if lower > 0.0 {
        Verdict::UnstableExpected
    } else {
        Verdict::Boundary
    };
    Ok(StabilityCheck {
        lyapunov,
        logplus_b,
        lyapunov_ok: upper < 0.0,
        logplus_ok: logplus_b.estimate.is_finite(),
        verdict,
    })
}

/// One named pass/fail line of a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingSummary {
    pub slope: Option<f64>,
    pub contraction_violations: usize,
    pub merged_at: Option<usize>,
    pub final_gap: f64,
}

impl From<&CouplingResult> for CouplingSummary {
    fn from(r: &CouplingResult) -> Self {
        Self {
            slope: r.slope,
            contraction_violations: r.contraction_violations,
            merged_at: r.merged_at,
            final_gap: r.final_gap(),
        }
    }
}

/// Aggregated output of a diagnostic run. Sections that were not computed
/// are omitted from the serialized form.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logplus_b: Option<LogPlusEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationarity: Option<StationarityResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moments: Option<Moments>,
    pub checks: Vec<Check>,
    /// Set when a run hit the divergence guard or another numeric anomaly.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anomaly: Option<String>,
}

impl DiagnosticsReport {
    pub fn all_passed(&self) -> bool {
        self.anomaly.is_none() && self.checks.iter().all(|c| c.passed)
    }
}
