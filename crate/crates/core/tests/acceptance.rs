//! One line per acceptance criterion, each with its measured value.
//! Run with `cargo test --test acceptance -- --nocapture` to see the table.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::*;
use ledgercast::calendar::Week;
use ledgercast::closure::gbt::{fit_matrix, training_curve, GbtParams};
use ledgercast::closure::KnownClosures;
use ledgercast::eval::{custom_loss, variance_weighted_score, FoldScore, LossWeights};
use ledgercast::forecaster::{
    changepoints, decompose, fit, ComponentKind, Events, ForecasterConfig, GroupRidges, Regressors, SeasonalityConfig,
};
use ledgercast::lags::{aligned_correlation, apply_lags, select_lags, select_lags_excluding};
use ledgercast::pipeline::{self, PipelineConfig};
use ledgercast::profiles::ProfileBook;
use ledgercast::series::WeeklySeries;
use ledgercast::synthgen::{self, SynthConfig};
use ledgercast::tune::{optimize, Dimension, ParamSpace, Params, TuneOptions};
use ledgercast::windows::simulate_partial;
use rand::Rng;

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn metric_exactness() -> Outcome {
    let f: Vec<FoldScore> = [(10.0, 0.2), (20.0, 0.3), (30.0, 0.5)]
        .iter()
        .enumerate()
        .map(|(i, &(mape, weight))| FoldScore { fold_index: i + 1, mape, weight })
        .collect();
    let expect = 0.5 * 23.0 + 0.5 * 61f64.sqrt();
    let got = variance_weighted_score(&f, 0.5).unwrap();
    let s = |a| variance_weighted_score(&f, a).unwrap();
    let affine = (0..=20)
        .map(|i| i as f64 / 20.0)
        .map(|a| (s(a) - (a * s(1.0) + (1.0 - a) * s(0.0))).abs())
        .fold(0.0, f64::max);
    (
        (got - expect).abs() < 1e-9 && affine < 1e-12,
        format!("score {got:.12} vs {expect:.12}; max affine residual {affine:.1e}"),
    )
}

fn loss_reductions() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = r.random_range(1..=10);
        let e: Vec<f64> = (0..k).map(|_| r.random_range(0.0..80.0)).collect();
        let w: Vec<f64> = (0..k).map(|_| r.random_range(0.01..2.0)).collect();
        let (mean, sd) = weighted_mean_std(&e, &w);
        let l = |alpha| custom_loss(&e, &LossWeights { weights: w.clone(), alpha }).unwrap();
        worst = worst.max((l(1.0) - mean).abs()).max((l(0.0) - sd).abs());
    }
    (worst < 1e-12, format!("100 vectors, max deviation {worst:.1e}"))
}

fn gbt_oracle() -> Outcome {
    let mut r = rng(77);
    let mut matched = 0;
    for _ in 0..50 {
        let (x, y) = random_problem(&mut r, 64);
        let depth = r.random_range(1..=2);
        let min_leaf = r.random_range(1..=3).min(x.len() / 2);
        let b = fit_matrix(&x, &y, GbtParams { n_trees: 1, max_depth: depth, learning_rate: 1.0, min_samples_leaf: min_leaf }).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let res: Vec<f64> = y.iter().map(|v| v - mean).collect();
        let rows: Vec<usize> = (0..x.len()).collect();
        matched += usize::from(same_tree(&b.trees[0], &brute_force_tree(&x, &res, &rows, 0, depth, min_leaf), 1e-9));
    }
    let mut monotone = 0;
    for _ in 0..10 {
        let (x, y) = random_problem(&mut r, 64);
        let b = fit_matrix(&x, &y, GbtParams { n_trees: 50, max_depth: 3, learning_rate: 0.2, min_samples_leaf: 1 }).unwrap();
        let c = training_curve(&b, &x, &y);
        monotone += usize::from(c.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15));
    }
    (matched == 50 && monotone == 10, format!("{matched}/50 trees identical to brute force; {monotone}/10 monotone loss curves"))
}

fn forecaster_recovery() -> Outcome {
    let mut r = rng(4);
    let weeks: Vec<Week> = (1..=156).collect();
    let (a, b, effect) = (420.0, 0.8, 1.7);
    let cps: Vec<(f64, f64)> = changepoints(&weeks, 2, 0.8).into_iter().zip([0.6, -0.9]).collect();
    let fourier: Vec<(f64, f64, f64)> = vec![(13.0, 12.0, -7.0), (52.0, -25.0, 9.0), (26.0, 4.0, 3.0)];
    let x: Vec<f64> = (0..156).map(|_| r.random_range(20.0..200.0)).collect();
    let y: Vec<f64> = weeks
        .iter()
        .map(|&w| {
            let t = w as f64;
            let mut v = a + b * t + effect * x[(w - 1) as usize];
            for &(c, d) in &cps {
                v += d * (t - c).max(0.0);
            }
            for &(period, s, c) in &fourier {
                let arg = 2.0 * std::f64::consts::PI * t / period;
                v += s * arg.sin() + c * arg.cos();
            }
            v
        })
        .collect();
    // Quarterly order 1 is period 13; yearly orders 1 and 2 are periods 52 and 26.
    let config = ForecasterConfig {
        seasonality: SeasonalityConfig::quarterly_yearly(1, 2),
        n_changepoints: 2,
        changepoint_range: 0.8,
        ridge: GroupRidges::ZERO,
    };
    let regs: Regressors = [("x".to_string(), WeeklySeries::new(1, x))].into_iter().collect();
    let events = Events::new();
    let m = fit(&WeeklySeries::new(1, y), &config, &regs, &events).unwrap();
    let fx = m.regressor_effect("x").unwrap();
    let mut errs = vec![
        (m.coefficient("intercept").unwrap() - fx * m.spec.regressors[0].1.mean - a).abs(),
        (m.coefficient("t").unwrap() - b).abs(),
        (fx - effect).abs(),
        (m.coefficient("quarterly_sin1").unwrap() - 12.0).abs(),
        (m.coefficient("quarterly_cos1").unwrap() + 7.0).abs(),
        (m.coefficient("yearly_sin1").unwrap() + 25.0).abs(),
        (m.coefficient("yearly_cos1").unwrap() - 9.0).abs(),
        (m.coefficient("yearly_sin2").unwrap() - 4.0).abs(),
        (m.coefficient("yearly_cos2").unwrap() - 3.0).abs(),
    ];
    for (c, d) in &cps {
        errs.push((m.coefficient(&format!("changepoint@{c}")).unwrap() - d).abs());
    }
    let coef_err = errs.iter().copied().fold(0.0, f64::max);
    let identity = decompose(&m, &weeks, &regs, &events).unwrap().max_identity_error();
    (
        coef_err < 1e-6 && identity < 1e-9,
        format!("max coefficient error {coef_err:.1e}; max decomposition residual {identity:.1e}"),
    )
}

fn lag_recovery() -> Outcome {
    let mut hits = 0;
    for seed in 1..=20 {
        let sc = relative_noise_config(seed, 104, 0.05);
        let ds = synthgen::generate(&sc).unwrap();
        let y = ds.collections(&sc.calendar()).unwrap();
        let spec = select_lags(&ds.support["orders"], &y, &sc.calendar(), 13, 0.05).unwrap();
        hits += usize::from(spec.non_q4.lags() == [3] && spec.q4.lags() == [2]);
    }
    (hits >= 19, format!("non-Q4 {{3}} and Q4 {{2}} recovered in {hits}/20 seeds"))
}

fn correlation_uplift() -> Outcome {
    let mut gains = Vec::new();
    for seed in 1..=10 {
        let sc = SynthConfig::default().with_seed(seed);
        let ds = synthgen::generate(&sc).unwrap();
        let cal = sc.calendar();
        let y = ds.collections(&cal).unwrap();
        let s = &ds.support["orders"];
        let lagged = apply_lags(s, &select_lags(s, &y, &cal, 13, 0.05).unwrap(), &cal);
        gains.push(aligned_correlation(&lagged, &y).unwrap() - aligned_correlation(s, &y).unwrap());
    }
    let min = gains.iter().copied().fold(f64::INFINITY, f64::min);
    let n = gains.iter().filter(|g| **g >= 0.1).count();
    (n == 10, format!("gain >= 0.1 in {n}/10 seeds, smallest {min:.3}"))
}

fn headline_uplift() -> Outcome {
    let cfg = PipelineConfig::default();
    let pinned = pipeline::compare(&synthgen::generate(&SynthConfig::default()).unwrap(), &cfg).unwrap().uplift_pct;
    let uplifts: Vec<f64> = (1..=10)
        .map(|seed| pipeline::compare(&synthgen::generate(&SynthConfig::default().with_seed(seed)).unwrap(), &cfg).unwrap().uplift_pct)
        .collect();
    let positive = uplifts.iter().filter(|u| **u > 0.0).count();
    let list: Vec<String> = uplifts.iter().map(|u| format!("{u:.1}")).collect();
    (
        pinned >= 5.0 && positive >= 9,
        format!("pinned seed {pinned:.2}%; positive in {positive}/10 seeds [{}]", list.join(", ")),
    )
}

fn component_share() -> Outcome {
    let sc = SynthConfig { base_level: 1000.0, ..SynthConfig::default() };
    let ds = synthgen::generate(&sc).unwrap();
    let cal = sc.calendar();
    let truth = ds.truth.as_ref().unwrap();
    let planted: f64 = {
        let s = &truth.support["orders"];
        let p = &sc.support[0].planted_lags;
        let weeks: Vec<Week> = truth.collections.weeks().collect();
        let effect: Vec<f64> = weeks
            .iter()
            .map(|&w| {
                let terms = if ledgercast::calendar::FiscalCalendar::quarter_unchecked(w) == 4 { &p.q4 } else { &p.non_q4 };
                terms.iter().map(|&(l, c)| c * s.get(w - l as Week).unwrap()).sum()
            })
            .collect();
        effect.iter().sum::<f64>() / (effect.iter().sum::<f64>() + sc.base_level * weeks.len() as f64)
    };
    let holidays: BTreeSet<Week> = sc.holidays.iter().map(|h| h.week).collect();
    let y = ds.collections(&cal).unwrap();
    let s = &ds.support["orders"];
    let lagged = apply_lags(s, &select_lags_excluding(s, &y, &cal, 13, 0.05, &|w| holidays.contains(&w)).unwrap(), &cal);
    let y = y.slice(lagged.start().unwrap().max(y.start().unwrap()), y.end().unwrap());
    let regs: Regressors = [("orders".to_string(), lagged)].into_iter().collect();
    let events: Events = [("holiday".to_string(), holidays)].into_iter().collect();
    let m = fit(&y, &ForecasterConfig::default(), &regs, &events).unwrap();
    let weeks: Vec<Week> = y.weeks().collect();
    let share = decompose(&m, &weeks, &regs, &events).unwrap().kind_share(ComponentKind::Regressor);
    (
        (0.10..=0.25).contains(&share),
        format!("planted effect {:.1}% of collections; regressor share {share:.3}", planted * 100.0),
    )
}

fn window_identity() -> Outcome {
    let sc = SynthConfig::default();
    let ds = synthgen::generate(&sc).unwrap();
    let cal = sc.calendar();
    let oracle = KnownClosures(ds.truth.as_ref().unwrap().payment_dates.clone());
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for anchor in [40, 77, 120, 169] {
        for len in [4, 13] {
            let visible = ds.censor(anchor, &cal).unwrap();
            let book = ProfileBook::new(&visible.invoices, cal.last_date_of(anchor).unwrap());
            let r = simulate_partial(&visible.invoices, &oracle, &book, anchor, len, &cal).unwrap();
            let truth = visible_book_truth(&ds, cal.last_date_of(anchor).unwrap(), anchor + len as Week, &cal);
            for (w, v) in r.series.iter() {
                worst = worst.max((v - truth.get(&w).copied().unwrap_or(0) as f64 / 100.0).abs());
            }
            cases += 1;
        }
    }
    (worst < 1e-9, format!("{cases} anchor/window pairs, max deviation {worst:.1e}"))
}

fn determinism() -> Outcome {
    let ds = synthgen::generate(&SynthConfig::default()).unwrap();
    let cfg = PipelineConfig::default();
    let a = serde_json::to_vec(&pipeline::compare(&ds, &cfg).unwrap()).unwrap();
    let b = serde_json::to_vec(&pipeline::compare(&ds, &cfg).unwrap()).unwrap();
    (a == b, format!("two compare reports, {} bytes, identical: {}", a.len(), a == b))
}

fn tuner_sanity() -> Outcome {
    let space = ParamSpace::new(vec![Dimension::continuous("p", -10.0, 10.0)]).unwrap();
    let oracle = grid_argmin(|p| (p - 2.0).powi(2), -10.0, 10.0, 20_000);
    let mut f = |p: &Params| Ok((p["p"].as_f64().unwrap() - 2.0).powi(2));
    let best = optimize(&mut f, &space, &TuneOptions::new(30, 0)).unwrap().best_params["p"].as_f64().unwrap();
    let ds = synthgen::generate(&SynthConfig::default()).unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.tune.budget = 8;
    let (t, _) = pipeline::tune_pipeline(&ds, &cfg).unwrap();
    let default_loss = pipeline::tuning_loss(&ds, &cfg.as_h2()).unwrap();
    (
        (best - oracle).abs() <= 0.2 && t.result.best_loss <= default_loss,
        format!(
            "quadratic optimum {best:.4} vs grid {oracle:.4}; pipeline loss {:.4} tuned vs {default_loss:.4} default",
            t.result.best_loss
        ),
    )
}

fn no_leakage() -> Outcome {
    let ds = synthgen::generate(&SynthConfig::default()).unwrap();
    let c = pipeline::compare(&ds, &PipelineConfig::default()).unwrap();
    let a = &c.h2.audit;
    (
        a.violations == 0 && a.checks > 0,
        format!("{} audited stage reads, {} after the anchor", a.checks, a.violations),
    )
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 12] = [
        ("metric exactness", metric_exactness),
        ("custom loss reductions", loss_reductions),
        ("GBT oracle equivalence", gbt_oracle),
        ("forecaster recovery", forecaster_recovery),
        ("lag recovery", lag_recovery),
        ("correlation uplift", correlation_uplift),
        ("headline uplift", headline_uplift),
        ("component share", component_share),
        ("perfect-oracle window identity", window_identity),
        ("determinism", determinism),
        ("tuner sanity", tuner_sanity),
        ("no-leakage audit", no_leakage),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            (false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        println!(
            "criterion {:>2} {:<32} {}  {} ({:.1}s)",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            detail,
            start.elapsed().as_secs_f64()
        );
        if !pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
