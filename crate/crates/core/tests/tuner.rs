mod common;

use common::grid_argmin;
use ledgercast::tune::{optimize, Dimension, ParamSpace, ParamValue, Params, Strategy, TuneOptions};
use ledgercast::Result;

fn quadratic(p: &Params) -> Result<f64> {
    Ok((p["p"].as_f64().unwrap() - 2.0).powi(2))
}

#[test]
fn bayesian_search_finds_quadratic_minimum() {
    let (lo, hi) = (-10.0, 10.0);
    let oracle = grid_argmin(|p| (p - 2.0).powi(2), lo, hi, 20_000);
    let space = ParamSpace::new(vec![Dimension::continuous("p", lo, hi)]).unwrap();
    for seed in 0..10 {
        let r = optimize(&mut quadratic, &space, &TuneOptions::new(30, seed)).unwrap();
        let p = r.best_params["p"].as_f64().unwrap();
        assert!((p - oracle).abs() <= 0.2, "seed {seed}: {p} vs grid optimum {oracle}");
        assert_eq!(r.history.len(), 30);
    }
}

#[test]
fn best_is_the_minimum_of_the_history() {
    let space = ParamSpace::new(vec![
        Dimension::continuous("p", -3.0, 7.0),
        Dimension::integer("k", 1, 9),
        Dimension::categorical("mode", &["a", "b", "c"]),
    ])
    .unwrap();
    let mut f = |p: &Params| -> Result<f64> {
        let bonus = if p["mode"].as_str() == Some("b") { 0.0 } else { 1.0 };
        Ok((p["p"].as_f64().unwrap() - 2.0).powi(2) + (p["k"].as_i64().unwrap() - 4).pow(2) as f64 + bonus)
    };
    for strategy in [Strategy::Bayesian, Strategy::Random] {
        let mut options = TuneOptions::new(25, 3);
        options.strategy = strategy;
        let r = optimize(&mut f, &space, &options).unwrap();
        let min = r.history.iter().map(|t| t.loss).fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_loss, min);
        for t in &r.history {
            assert!(space.contains(&t.params), "{:?}", t.params);
            assert!(matches!(t.params["k"], ParamValue::Int(_)));
        }
    }
}

#[test]
fn initial_points_come_first() {
    let space = ParamSpace::new(vec![Dimension::continuous("p", 0.0, 5.0)]).unwrap();
    let start: Params = [("p".to_string(), ParamValue::Float(4.5))].into_iter().collect();
    let mut options = TuneOptions::new(8, 1);
    options.initial_points = vec![start.clone()];
    let r = optimize(&mut quadratic, &space, &options).unwrap();
    assert_eq!(r.history[0].params, start);
    assert!(r.best_loss <= r.history[0].loss);
}

#[test]
fn same_seed_same_history() {
    let space = ParamSpace::new(vec![Dimension::continuous("p", 0.0, 5.0)]).unwrap();
    let a = optimize(&mut quadratic, &space, &TuneOptions::new(15, 9)).unwrap();
    let b = optimize(&mut quadratic, &space, &TuneOptions::new(15, 9)).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn outside_initial_point_and_zero_budget_rejected() {
    let space = ParamSpace::new(vec![Dimension::continuous("p", 0.0, 5.0)]).unwrap();
    let mut options = TuneOptions::new(5, 1);
    options.initial_points = vec![[("p".to_string(), ParamValue::Float(9.0))].into_iter().collect()];
    assert!(optimize(&mut quadratic, &space, &options).is_err());
    assert!(optimize(&mut quadratic, &space, &TuneOptions::new(0, 1)).is_err());
}
