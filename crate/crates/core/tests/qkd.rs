use fiberlink::coincidence::Coincidence;
use fiberlink::qkd::{
    binary_entropy, crossover_analysis, estimate_visibility, qber_threshold, secure_key_rate, sift, KeyRateResult,
    QkdError, SecurityParams,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `H₂(e)` from the series `ln(1 − x) = −Σ xᵏ/k`, independent of `log2`.
fn entropy_series(e: f64) -> f64 {
    let ln1m = |x: f64| -(1..400).map(|k| x.powi(k) / k as f64).sum::<f64>();
    let ln_e = ln1m(1.0 - e);
    let ln_1me = ln1m(e);
    -(e * ln_e + (1.0 - e) * ln_1me) / std::f64::consts::LN_2
}

#[test]
fn entropy_at_reference_points() {
    assert!((binary_entropy(0.027).unwrap() - 0.1790).abs() <= 0.0005);
    assert!((binary_entropy(0.027).unwrap() - entropy_series(0.027)).abs() < 1e-6);
    assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
    assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
    assert!(matches!(binary_entropy(1.1), Err(QkdError::DomainError { .. })));
}

#[test]
fn summary_rows_from_reference_inputs() {
    let rows = [
        (3000.0, 0.880, 420.0),
        (2700.0, 0.946, 800.0),
        (430.0, 0.916, 90.0),
        (3600.0, 0.922, 850.0),
        (1950.0, 0.956, 650.0),
    ];
    let p = SecurityParams::default();
    for (coinc, v, expected) in rows {
        let r = secure_key_rate(coinc, (1.0 - v) / 2.0, &p).unwrap();
        assert!((r - expected).abs() / expected <= 0.05, "{coinc}/s at V = {v}: {r}, expected {expected}");
    }
    assert_eq!(secure_key_rate(5200.0, (1.0 - 0.629) / 2.0, &p).unwrap(), 0.0);
}

#[test]
fn threshold_roots() {
    let f = |f: f64| qber_threshold(&SecurityParams { ec_inefficiency: f, ..SecurityParams::default() });
    // Bisection on the series entropy.
    let oracle = |f: f64| {
        let (mut lo, mut hi) = (1e-6, 0.5);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if 1.0 - (f + 1.0) * entropy_series(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    for ec in [1.0, 1.2, 1.2375, 1.5] {
        assert!((f(ec) - oracle(ec)).abs() < 1e-9, "f = {ec}: {} vs {}", f(ec), oracle(ec));
    }
    assert!((f(1.0) - 0.110).abs() < 0.001, "{}", f(1.0));
    assert!((f(1.2) - 0.100).abs() < 0.005, "{}", f(1.2));
    let p = SecurityParams::default();
    let e = qber_threshold(&p);
    assert!(secure_key_rate(1000.0, e - 1e-4, &p).unwrap() > 0.0);
    assert_eq!(secure_key_rate(1000.0, e + 1e-9, &p).unwrap(), 0.0);
}

#[test]
fn visibility_qber_relation() {
    let p = SecurityParams::default();
    let r = KeyRateResult::new(1000.0, 500.0, 0.043, &p).unwrap();
    assert!((r.visibility - 0.914).abs() < 1e-9);
    let r = KeyRateResult::new(1000.0, 500.0, (1.0 - 0.956) / 2.0, &p).unwrap();
    assert!((r.qber - 0.022).abs() < 1e-9);
}

fn random_coincidences(n: usize, rng: &mut impl Rng) -> Vec<Coincidence> {
    (0..n)
        .map(|i| Coincidence {
            time_a: i as u64,
            time_b: i as u64,
            channel_a: rng.gen_range(0..4),
            channel_b: rng.gen_range(0..4),
        })
        .collect()
}

#[test]
fn random_analyzers_keep_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 100_000;
    let kept = sift(&random_coincidences(n, &mut rng)).len() as f64;
    let sigma = (n as f64 * 0.25).sqrt();
    assert!((kept - 0.5 * n as f64).abs() < 3.0 * sigma, "kept {kept}");
}

#[test]
fn same_basis_ideal_pairs_have_no_errors() {
    let c: Vec<Coincidence> = (0..400u64)
        .map(|i| {
            let ch = (i % 4) as u8;
            Coincidence { time_a: i, time_b: i, channel_a: ch, channel_b: ch }
        })
        .collect();
    let sifted = sift(&c);
    assert_eq!(sifted.len(), c.len());
    let v = estimate_visibility(&sifted, 100).unwrap();
    assert_eq!((v.visibility, v.qber), (1.0, 0.0));
}

#[test]
fn crossover_reference_case() {
    let c = crossover_analysis(3.0, 0.22, 0.70, 0.15).unwrap();
    assert!((c.breakeven_length - 2.4).abs() <= 0.1, "{}", c.breakeven_length);
    assert!((c.breakeven_loss - 7.3).abs() <= 0.2, "{}", c.breakeven_loss);
    // (3.0 − 0.22)·L = 10·log10(0.70 / 0.15)
    let oracle = 10.0 * (0.70f64 / 0.15).log10() / 2.78;
    assert!((c.breakeven_length - oracle).abs() < 1e-12);
    assert_eq!(crossover_analysis(3.0, 0.22, 0.5, 0.5).unwrap().breakeven_length, 0.0);
    assert!(matches!(crossover_analysis(3.0, 0.22, 0.15, 0.70), Err(QkdError::NoCrossover { .. })));
}

proptest! {
    #[test]
    fn key_rate_monotone_and_linear(c in 1.0f64..1e6, e1 in 0.0f64..0.5, e2 in 0.0f64..0.5, k in 0.1f64..10.0) {
        let p = SecurityParams::default();
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(secure_key_rate(c, hi, &p).unwrap() <= secure_key_rate(c, lo, &p).unwrap());
        let r = secure_key_rate(c, lo, &p).unwrap();
        prop_assert!((secure_key_rate(k * c, lo, &p).unwrap() - k * r).abs() <= 1e-9 * (1.0 + k * r));
    }

    #[test]
    fn key_rate_results_are_consistent(n in 100usize..5000, seed in 0u64..1000, duration in 0.1f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_coincidences(n, &mut rng);
        match KeyRateResult::from_coincidences(&c, duration, &SecurityParams::default()) {
            Ok(r) => prop_assert!(r.is_consistent(), "{r:?}"),
            Err(e) => {
                let insufficient = matches!(e, QkdError::InsufficientData { .. });
                prop_assert!(insufficient, "{e}");
            }
        }
    }

    #[test]
    fn doubling_losses_halves_breakeven(l1 in 0.5f64..5.0, ratio in 0.01f64..0.9, es in 0.2f64..1.0, el in 0.01f64..0.2) {
        let l2 = l1 * ratio;
        let one = crossover_analysis(l1, l2, es, el).unwrap();
        let two = crossover_analysis(2.0 * l1, 2.0 * l2, es, el).unwrap();
        prop_assert!((two.breakeven_length - 0.5 * one.breakeven_length).abs() < 1e-9 * one.breakeven_length.max(1.0));
    }
}
