mod common;

use common::{relative_noise_config, rng};
use ledgercast::lags::{aligned_correlation, apply_lags, score_lags, select_lags, LagSpec, Regime};
use ledgercast::series::WeeklySeries;
use ledgercast::synthgen::{self, SynthConfig};
use proptest::prelude::*;
use rand::Rng;

fn recovered(seed: u64) -> (Vec<u32>, Vec<u32>) {
    let sc = relative_noise_config(seed, 104, 0.05);
    let ds = synthgen::generate(&sc).unwrap();
    let y = ds.collections(&sc.calendar()).unwrap();
    let spec = select_lags(&ds.support["orders"], &y, &sc.calendar(), 13, 0.05).unwrap();
    assert!(!spec.q4_fallback, "seed {seed}: two Q4 quarters expected");
    (spec.non_q4.lags(), spec.q4.lags())
}

#[test]
fn planted_regime_lags_recovered() {
    let hits: Vec<u64> = (1..=20).filter(|&s| recovered(s) == (vec![3], vec![2])).collect();
    assert!(hits.len() >= 19, "recovered in {} of 20 seeds: {hits:?}", hits.len());
}

#[test]
fn lagged_support_correlates_better_than_raw() {
    for seed in 1..=10 {
        let sc = SynthConfig::default().with_seed(seed);
        let ds = synthgen::generate(&sc).unwrap();
        let cal = sc.calendar();
        let y = ds.collections(&cal).unwrap();
        let support = &ds.support["orders"];
        let spec = select_lags(support, &y, &cal, 13, 0.05).unwrap();
        let lagged = apply_lags(support, &spec, &cal);
        let gain = aligned_correlation(&lagged, &y).unwrap() - aligned_correlation(support, &y).unwrap();
        assert!(gain >= 0.1, "seed {seed}: correlation gain {gain:.3}");
    }
}

#[test]
fn regime_of_week_follows_quarters() {
    assert_eq!(Regime::of_week(39), Regime::NonQ4);
    assert_eq!(Regime::of_week(40), Regime::Q4);
    assert_eq!(Regime::of_week(52), Regime::Q4);
    assert_eq!(Regime::of_week(53), Regime::NonQ4);
    assert_eq!(Regime::of_week(92), Regime::Q4);
}

fn random_pair(seed: u64, n: usize) -> (WeeklySeries, WeeklySeries) {
    let mut r = rng(seed);
    let s: Vec<f64> = (0..n).map(|_| r.random_range(0.0..100.0)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| if i >= 2 { 2.0 * s[i - 2] + r.random_range(-30.0..30.0) } else { 0.0 })
        .collect();
    (WeeklySeries::new(1, s), WeeklySeries::new(1, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scores_invariant_to_affine_maps(seed in 0u64..10_000, a in 0.1f64..10.0, b in -100.0f64..100.0, c in -10.0f64..10.0, d in -100.0f64..100.0) {
        prop_assume!(c.abs() > 0.1);
        let (s, y) = random_pair(seed, 80);
        let all = |_: i64| true;
        let base = score_lags(&s, &y, &all, 6).unwrap();
        let moved = score_lags(&s.map(|v| a * v + b), &y.map(|v| c * v + d), &all, 6).unwrap();
        for ((l1, r1), (l2, r2)) in base.iter().zip(&moved) {
            prop_assert_eq!(l1, l2);
            prop_assert!((r1 - r2).abs() < 1e-9, "lag {}: {} vs {}", l1, r1, r2);
        }
    }

    #[test]
    fn applying_lags_is_linear(seed in 0u64..10_000, a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let (s1, s2) = random_pair(seed, 60);
        let spec = LagSpec::with_regimes(&[(1, 0.7), (4, -0.2)], &[(2, 1.3)]);
        let cal = SynthConfig::default().calendar();
        let combo = WeeklySeries::new(1, s1.values().iter().zip(s2.values()).map(|(u, v)| a * u + b * v).collect());
        let lhs = apply_lags(&combo, &spec, &cal);
        let (p1, p2) = (apply_lags(&s1, &spec, &cal), apply_lags(&s2, &spec, &cal));
        prop_assert_eq!(lhs.start(), p1.start());
        for (w, v) in lhs.iter() {
            let expect = a * p1.get(w).unwrap() + b * p2.get(w).unwrap();
            prop_assert!((v - expect).abs() < 1e-9 * (1.0 + expect.abs()));
        }
    }
}
