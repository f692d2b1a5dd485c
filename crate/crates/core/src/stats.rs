//! Sample statistics: two-sample Kolmogorov–Smirnov and moment summaries.

use serde::Serialize;

/// Result of a two-sample KS comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsOutcome {
    pub statistic: f64,
    /// Asymptotic p-value, `Q_KS(√(nm/(n+m)) · D)`.
    pub p_value: f64,
}

/// Largest vertical distance between the empirical CDFs of `xs` and `ys`.
///
/// Ties are handled by stepping both ECDFs past every copy of a value before
/// comparing. NaNs sort last (`total_cmp`) and are treated as ordinary values.
pub fn ks_statistic(xs: &[f64], ys: &[f64]) -> f64 {
    assert!(!xs.is_empty() && !ys.is_empty(), "KS needs non-empty samples");
    let mut xs = xs.to_vec();
    let mut ys = ys.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = if xs[i].total_cmp(&ys[j]).is_le() { xs[i] } else { ys[j] };
        while i < n && xs[i].total_cmp(&v).is_le() {
            i += 1;
        }
        while j < m && ys[j].total_cmp(&v).is_le() {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> KsOutcome {
    let statistic = ks_statistic(xs, ys);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let lambda = (n * m / (n + m)).sqrt() * statistic;
    KsOutcome {
        statistic,
        p_value: kolmogorov_survival(lambda),
    }
}

/// `P(K > λ)` for the Kolmogorov distribution.
///
/// Uses `2 Σ (−1)^{j−1} e^{−2 j² λ²}` for `λ ≥ 1.18` and the Jacobi-theta form
/// `1 − √(2π)/λ Σ e^{−(2j−1)² π² / (8λ²)}` below it; both converge in a few
/// terms on their side of the split.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    let q = if lambda < 1.18 {
        let y = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let sum: f64 = (1..=8)
            .map(|j| {
                let k = (2 * j - 1) as f64;
                (k * k * y).exp()
            })
            .sum();
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum
    } else {
        let sum: f64 = (1..=100)
            .map(|j| {
                let j = j as f64;
                let sign = if j as u64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * j * j * lambda * lambda).exp()
            })
            .sum();
        2.0 * sum
    };
    q.clamp(0.0, 1.0)
}

/// Sample moments. The shape statistics are `None` for a zero-variance sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    /// Unbiased (`n − 1`) variance.
    pub variance: f64,
    /// `m3 / m2^{3/2}` with central moments `m_k` normalized by `n`.
    pub skewness: Option<f64>,
    /// `m4 / m2² − 3`.
    pub excess_kurtosis: Option<f64>,
}

/// Two-pass moment summary. `None` for fewer than two values.
pub fn sample_moments(xs: &[f64]) -> Option<Moments> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let variance = m2 / (nf - 1.0);
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (Some(m3 / m2.powf(1.5)), Some(m4 / (m2 * m2) - 3.0))
    } else {
        (None, None)
    };
    Some(Moments {
        n,
        mean,
        variance,
        skewness,
        excess_kurtosis,
    })
}

/// Mean and standard error of the mean.
pub(crate) fn mean_and_stderr(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_statistic_disjoint_and_identical() {
        let zeros = vec![0.0; 10];
        let ones = vec![1.0; 10];
        assert_eq!(ks_statistic(&zeros, &ones), 1.0);
        assert_eq!(ks_statistic(&ones, &ones), 0.0);
        let out = ks_two_sample(&zeros, &ones);
        assert!(out.p_value < 1e-3);
    }

    #[test]
    fn ks_statistic_small_example() {
        let xs = [1.0, 2.0, 5.0];
        let ys = [2.0, 3.0];
        // x≤1: 1/3 vs 0; ≤2: 2/3 vs 1/2; ≤3: 2/3 vs 1; ≤5: 1 vs 1
        assert!((ks_statistic(&xs, &ys) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ks_statistic_brute_force() {
        let xs = [0.3, -1.2, 0.3, 4.0, 2.2, 2.2, -0.1];
        let ys = [0.3, 1.0, -3.0, 2.2, 5.5];
        let ecdf = |s: &[f64], v: f64| s.iter().filter(|&&x| x <= v).count() as f64 / s.len() as f64;
        let brute = xs
            .iter()
            .chain(&ys)
            .map(|&v| (ecdf(&xs, v) - ecdf(&ys, v)).abs())
            .fold(0.0, f64::max);
        assert!((ks_statistic(&xs, &ys) - brute).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_survival_reference_points() {
        // Standard table values of the Kolmogorov distribution.
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_survival(0.8276) - 0.5).abs() < 1e-3);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
        // Branches meet at the split.
        let below = kolmogorov_survival(1.18 - 1e-12);
        let above = kolmogorov_survival(1.18);
        assert!((below - above).abs() < 1e-10);
    }

    #[test]
    fn moments_of_constant_sample() {
        let m = sample_moments(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(m.mean, 1.0);
        assert_eq!(m.variance, 0.0);
        assert_eq!(m.skewness, None);
        assert_eq!(m.excess_kurtosis, None);
    }

    #[test]
    fn moments_small_sample() {
        let m = sample_moments(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.mean, 2.5);
        assert!((m.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!(m.skewness.unwrap().abs() < 1e-15);
        // m2 = 1.25, m4 = (2·5.0625 + 2·0.0625)/4 = 2.5625
        assert!((m.excess_kurtosis.unwrap() - (2.5625 / 1.5625 - 3.0)).abs() < 1e-14);
    }

    #[test]
    fn ols_recovers_line() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.7 * x).collect();
        assert!((ols_slope(&xs, &ys).unwrap() + 0.7).abs() < 1e-14);
        assert_eq!(ols_slope(&[1.0], &[1.0]), None);
    }
}
