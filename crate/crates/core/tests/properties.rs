use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use cloudsre::cloud::{gen_drop_def1, gen_drop_def2, gen_drops, gen_drops_parallel};
use cloudsre::diagnostics::coupling_decay;
use cloudsre::sre::{dominating_path, partial_path, window_for, TimeIndexedCoeffs};
use cloudsre::{ACoeff, BCoeff, CloudParams, CoeffProcess, Definition, GaussianSource, NoiseStream};

fn cloud_params() -> impl Strategy<Value = CloudParams> {
    (prop::collection::vec(-50.0..50.0f64, 1..8), 1e-6..20.0f64)
        .prop_map(|(en, he)| CloudParams::new(en, he).unwrap())
}

fn b_coeff() -> impl Strategy<Value = BCoeff> {
    prop_oneof![
        (-5.0..5.0f64).prop_map(|value| BCoeff::Const { value }),
        (-5.0..5.0f64, 0.0..3.0f64).prop_map(|(mean, sd)| BCoeff::Gaussian { mean, sd }),
        (-5.0..5.0f64, -0.95..0.95f64, 0.0..3.0f64)
            .prop_map(|(mean, rho, sd)| BCoeff::Ar1 { mean, rho, sd }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn definitions_are_bitwise_equal(params in cloud_params(), seed in any::<u64>()) {
        let a = gen_drop_def1(&params, &mut NoiseStream::new(seed));
        let b = gen_drop_def2(&params, &mut NoiseStream::new(seed));
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn drops_consume_p_draws_each(params in cloud_params(), seed in any::<u64>(), n in 1usize..50) {
        let mut stream = NoiseStream::new(seed);
        gen_drops(&params, n, &mut stream, Definition::Def2).unwrap();
        prop_assert_eq!(stream.position(), (n * params.order()) as u64);
    }

    #[test]
    fn parallel_batch_is_per_index_deterministic(params in cloud_params(), seed in any::<u64>()) {
        let base = NoiseStream::new(seed);
        let batch = gen_drops_parallel(&params, 20, &base, Definition::Def1).unwrap();
        for (i, v) in batch.values.iter().enumerate() {
            let single = gen_drop_def1(&params, &mut base.substream(i as u64));
            prop_assert_eq!(v.to_bits(), single.to_bits());
        }
    }

    #[test]
    fn partial_solutions_are_dominated(
        scale in 0.1..2.0f64,
        b in b_coeff(),
        seed in any::<u64>(),
        k in 1u64..40,
        n in 0i64..15,
    ) {
        let coeffs = CoeffProcess::new(ACoeff::Gaussian { scale }, b).unwrap();
        let indexed = TimeIndexedCoeffs::new(coeffs, &NoiseStream::new(seed));
        let window = window_for(&indexed, k, n).unwrap();
        let xs = partial_path(&window, k, n).unwrap();
        let ys = dominating_path(&window, k, n).unwrap();
        prop_assert_eq!(xs.len(), ys.len());
        for (x, y) in xs.iter().zip(&ys) {
            prop_assert!(x.abs() <= *y, "|{}| > {}", x, y);
        }
    }

    #[test]
    fn coupling_never_violates_contraction(
        scale in 0.1..2.5f64,
        b in b_coeff(),
        x0 in -100.0..100.0f64,
        shift in 0.1..100.0f64,
        seed in any::<u64>(),
    ) {
        let coeffs = CoeffProcess::new(ACoeff::Gaussian { scale }, b).unwrap();
        // Scales above e^{0.635} may legitimately trip the divergence guard.
        if let Ok(r) = coupling_decay(&coeffs, x0, x0 + shift, 200, &mut NoiseStream::new(seed)) {
            prop_assert_eq!(r.contraction_violations, 0);
        }
    }
}

/// One-sample KS of 1e5 draws against the standard normal CDF, 100 trials.
/// 1.63/√N is the 1% critical value, so at least 95 trials should pass.
#[test]
fn gaussian_stream_passes_ks_against_normal_cdf() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = 100_000;
    let critical = 1.63 / (n as f64).sqrt();
    let passed = (0..100u64)
        .filter(|&trial| {
            let mut stream = NoiseStream::new(trial);
            let mut xs: Vec<f64> = (0..n).map(|_| stream.next_gaussian()).collect();
            xs.sort_by(f64::total_cmp);
            let d = xs
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let f = normal.cdf(x);
                    (f - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - f)
                })
                .fold(0.0, f64::max);
            d < critical
        })
        .count();
    assert!(passed >= 95, "{passed}/100 trials below the 1% KS critical value");
}
