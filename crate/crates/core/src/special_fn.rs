//! Constants and special-function values behind the log-moment of a standard
//! normal coefficient, plus an adaptive Gauss–Kronrod quadrature that
//! evaluates the same moment directly from its integral.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{LN_2, PI};

use serde::Serialize;
use thiserror::Error;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Hard cap on the number of subintervals held by the adaptive integrator.
const MAX_SUBINTERVALS: usize = 20_000;

#[derive(Debug, Error, PartialEq)]
pub enum SpecialFnError {
    #[error("quadrature tolerance {0} outside (0, 1e-2)")]
    ToleranceOutOfRange(f64),
    #[error("quadrature did not reach tolerance {tol:e} within {intervals} subintervals (error estimate {estimate:e})")]
    NotConverged {
        tol: f64,
        intervals: usize,
        estimate: f64,
    },
}

/// How a [`LogMomentResult`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LogMomentMethod {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

/// A value of `E[log|A|]` (in nats) together with how it was computed.
///
/// `stderr` is zero for the deterministic methods. For quadrature it is not
/// used to carry the integration error; see [`Integral`] for that.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogMomentResult {
    pub value: f64,
    pub method: LogMomentMethod,
    pub stderr: f64,
}

impl LogMomentResult {
    pub fn monte_carlo(value: f64, stderr: f64) -> Self {
        Self {
            value,
            method: LogMomentMethod::MonteCarlo,
            stderr,
        }
    }
}

pub fn euler_gamma() -> f64 {
    EULER_GAMMA
}

/// Γ(1/2) = √π.
pub fn gamma_half() -> f64 {
    PI.sqrt()
}

/// ψ(1/2) = −γ − 2 ln 2.
pub fn psi_half() -> f64 {
    -euler_gamma() - 2.0 * LN_2
}

/// `E[log|ε|]` for `ε ~ N(0, 1)`, i.e. `(ln Γ)'(1/2)/2 + ln(2)/2 = −(γ + ln 2)/2`.
pub fn expected_log_abs_std_normal() -> LogMomentResult {
    LogMomentResult {
        value: 0.5 * (psi_half() + LN_2),
        method: LogMomentMethod::ClosedForm,
        stderr: 0.0,
    }
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Result of [`integrate`]: the value and the summed Kronrod error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
    pub subintervals: usize,
}

/// `E[log|ε|]` computed by quadrature of `2 ∫₀^∞ log(a) φ(a) da`.
///
/// The domain is split at `a = 1`. On `(0, 1)` the substitution `a = e^{−u}`
/// turns the log singularity into the smooth integrand `−u e^{−u} φ(e^{−u})`
/// on `(0, ∞)`. Both infinite ranges are cut where a closed-form bound on the
/// dropped tail falls below `tol / 10`.
pub fn log_moment_quadrature(tol: f64) -> Result<LogMomentResult, SpecialFnError> {
    check_tolerance(tol)?;
    // Halve once for the factor 2, once more to split the budget between the
    // two halves, and reserve a tenth for truncation.
    let half_tol = tol / 4.0;
    let piece_tol = half_tol * 0.9;
    let cut_tol = half_tol / 10.0;

    // ∫_U^∞ u e^{−u} φ(e^{−u}) du ≤ φ(0) (U + 1) e^{−U}
    let mut upper_u: f64 = 1.0;
    while FRAC_1_SQRT_2PI * (upper_u + 1.0) * (-upper_u).exp() > cut_tol {
        upper_u += 1.0;
    }
    let inner = integrate(
        |u| {
            let a = (-u).exp();
            -u * a * std_normal_pdf(a)
        },
        0.0,
        upper_u,
        piece_tol,
    )?;

    let outer = integrate(
        |a| a.ln() * std_normal_pdf(a),
        1.0,
        log_tail_cutoff(cut_tol),
        piece_tol,
    )?;

    Ok(LogMomentResult {
        value: 2.0 * (inner.value + outer.value),
        method: LogMomentMethod::Quadrature,
        stderr: 0.0,
    })
}

/// `E[log⁺|ε|] = 2 ∫₁^∞ log(b) φ(b) db` for `ε ~ N(0, 1)`, by quadrature.
pub fn logplus_moment_quadrature(tol: f64) -> Result<f64, SpecialFnError> {
    check_tolerance(tol)?;
    let half_tol = tol / 2.0;
    let outer = integrate(
        |a| a.ln() * std_normal_pdf(a),
        1.0,
        log_tail_cutoff(half_tol / 10.0),
        half_tol * 0.9,
    )?;
    Ok(2.0 * outer.value)
}

fn check_tolerance(tol: f64) -> Result<(), SpecialFnError> {
    if tol > 0.0 && tol < 1e-2 {
        Ok(())
    } else {
        Err(SpecialFnError::ToleranceOutOfRange(tol))
    }
}

/// Smallest integer `L ≥ 1` with `∫_L^∞ log(a) φ(a) da ≤ φ(L) ≤ cut`
/// (using `log a ≤ a`).
fn log_tail_cutoff(cut: f64) -> f64 {
    let mut upper = 1.0;
    while std_normal_pdf(upper) > cut {
        upper += 1.0;
    }
    upper
}

// 15-point Kronrod nodes on [−1, 1] (non-negative half) and weights; the
// 7-point Gauss rule uses the odd-indexed nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Segment {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment {
        lo,
        hi,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Globally adaptive G7–K15 quadrature of `f` over the finite interval
/// `[lo, hi]`, bisecting the segment with the largest error estimate until
/// the summed estimate is at most `tol`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<Integral, SpecialFnError> {
    integrate_capped(f, lo, hi, tol, MAX_SUBINTERVALS)
}

fn integrate_capped<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    tol: f64,
    max_subintervals: usize,
) -> Result<Integral, SpecialFnError> {
    let mut heap = BinaryHeap::new();
    heap.push(gauss_kronrod(&f, lo, hi));
    loop {
        let total_error: f64 = heap.iter().map(|s| s.error).sum();
        if total_error <= tol {
            let mut segments = heap.into_vec();
            segments.sort_by(|a, b| a.lo.total_cmp(&b.lo));
            return Ok(Integral {
                value: segments.iter().map(|s| s.value).sum(),
                abs_error: total_error,
                subintervals: segments.len(),
            });
        }
        if heap.len() >= max_subintervals {
            return Err(SpecialFnError::NotConverged {
                tol,
                intervals: heap.len(),
                estimate: total_error,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        heap.push(gauss_kronrod(&f, worst.lo, mid));
        heap.push(gauss_kronrod(&f, mid, worst.hi));
    }
}
