use std::collections::BTreeMap;
use std::sync::OnceLock;

use chrono::Duration;
use ledgercast::calendar::Week;
use ledgercast::dataset::Dataset;
use ledgercast::forecaster::ForecasterConfig;
use ledgercast::money::Money;
use ledgercast::pipeline::run::{GROUP_SUPPORT_LAGGED, GROUP_SUPPORT_RAW, GROUP_WINDOW_LONG, GROUP_WINDOW_SHORT};
use ledgercast::pipeline::{self, PipelineConfig, Variant};
use ledgercast::synthgen::{self, SynthConfig};
use ledgercast::ErrorKind;

fn pinned() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| synthgen::generate(&SynthConfig::default()).unwrap())
}

#[test]
fn compare_is_byte_identical_across_runs() {
    let cfg = PipelineConfig::default();
    let a = serde_json::to_string(&pipeline::compare(pinned(), &cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&pipeline::compare(pinned(), &cfg).unwrap()).unwrap();
    assert!(a == b, "reports differ");
}

#[test]
fn walk_forward_audit_is_clean() {
    let c = pipeline::compare(pinned(), &PipelineConfig::default()).unwrap();
    let a = &c.h2.audit;
    let origins: std::collections::BTreeSet<Week> = c.h2.evaluation.as_ref().unwrap().windows.iter().flat_map(|w| w.folds.iter().map(|f| f.origin)).chain([c.h2.origin]).collect();
    // Every origin audits at least ingest, support forecast, profiles, closure and baseline.
    assert!(a.checks >= 5 * origins.len(), "{} checks for {} origins", a.checks, origins.len());
    assert_eq!(a.violations, 0);
    for stage in ["ingest", "profiles", "closure", "support_forecast", "baseline"] {
        assert!(a.stages.contains(stage), "stage {stage} not audited: {:?}", a.stages);
    }
}

/// Changes everything the forecaster must not see at `origin`: amounts of
/// later invoices, later payment dates and later support values.
fn perturb_future(ds: &Dataset, origin: Week) -> Dataset {
    let cal = PipelineConfig::default().calendar();
    let cutoff = cal.last_date_of(origin).unwrap();
    let mut out = ds.without_truth();
    for inv in &mut out.invoices {
        if inv.issue_date > cutoff {
            inv.amount = Money::from_cents(inv.amount.cents() * 3);
        }
        if let Some(p) = inv.payment_date.filter(|p| *p > cutoff) {
            inv.payment_date = Some(p + Duration::days(9));
        }
    }
    for s in out.support.values_mut() {
        *s = ledgercast::series::WeeklySeries::new(
            s.start().unwrap(),
            s.iter().map(|(w, v)| if w > origin { v * 5.0 + 17.0 } else { v }).collect(),
        );
    }
    out
}

#[test]
fn future_data_does_not_move_the_forecast() {
    let cfg = PipelineConfig::default();
    for origin in [110, 140] {
        let (a, audit) = pipeline::forecast_at(pinned(), &cfg, origin).unwrap();
        let (b, _) = pipeline::forecast_at(&perturb_future(pinned(), origin), &cfg, origin).unwrap();
        assert_eq!(a.forecast, b.forecast, "origin {origin}");
        assert_eq!(a.model, b.model);
        assert!(audit.violations().is_empty());
    }
}

#[test]
fn h2_without_windows_or_lags_is_h1() {
    let mut cfg = PipelineConfig::default();
    cfg.windows.enabled = false;
    cfg.lags.enabled = false;
    let c = pipeline::compare(pinned(), &cfg).unwrap();
    assert!(c.uplift_pct.abs() < 0.5, "uplift {}", c.uplift_pct);
    assert_eq!(c.uplift_pct, 0.0);
}

#[test]
fn h1_never_uses_windows_or_lags() {
    let (_, audit) = pipeline::evaluate(pinned(), &PipelineConfig::default().as_h1()).unwrap();
    let groups = &audit.feature_groups;
    assert!(groups.contains(GROUP_SUPPORT_RAW));
    for g in [GROUP_SUPPORT_LAGGED, GROUP_WINDOW_SHORT, GROUP_WINDOW_LONG] {
        assert!(!groups.contains(g), "H1 used {g}");
    }
    let (_, audit) = pipeline::evaluate(pinned(), &PipelineConfig::default().as_h2()).unwrap();
    for g in [GROUP_SUPPORT_LAGGED, GROUP_WINDOW_SHORT, GROUP_WINDOW_LONG] {
        assert!(audit.feature_groups.contains(g), "H2 did not use {g}");
    }
}

#[test]
fn noise_free_structure_is_forecast_almost_exactly() {
    let mut sc = SynthConfig { noise_std: 0.0, ..SynthConfig::default() };
    for s in &mut sc.support {
        s.noise_cv = 0.0;
    }
    let ds = synthgen::generate(&sc).unwrap();
    let mut cfg = PipelineConfig::default().as_h2();
    cfg.forecaster = ForecasterConfig::trend_only();
    let (e, _) = pipeline::evaluate(&ds, &cfg).unwrap();
    for w in &e.windows {
        for f in &w.folds {
            assert!(f.mape < 0.5, "window {} fold {}: MAPE {}", w.index, f.index, f.mape);
        }
    }
}

#[test]
fn variant_contracts() {
    let cfg = PipelineConfig::default();
    let err = pipeline::run_h2(pinned(), &cfg.as_h1()).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Validation);

    let no_support = Dataset::new(pinned().invoices.clone(), BTreeMap::new());
    let err = pipeline::run(&no_support, &cfg.as_h2(), false).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Data);
    assert!(err.to_string().contains("support"), "{err}");
    assert!(pipeline::run(&no_support, &cfg.as_h1(), false).is_ok());
    let mut univariate = cfg.as_h2();
    univariate.baseline.pure_univariate = true;
    let r = pipeline::run(&no_support, &univariate, false).unwrap();
    assert_eq!(r.forecast.len(), cfg.eval.horizon);
    assert_eq!(r.variant, Variant::H2);
}

#[test]
fn export_and_ingest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sc = SynthConfig::default();
    synthgen::export(pinned(), dir.path(), &sc.calendar()).unwrap();
    let back = pipeline::ingest(&dir.path().join("invoices.csv"), Some(&dir.path().join("support.csv")), &sc.calendar()).unwrap();
    assert_eq!(back.invoices, pinned().invoices);
    assert_eq!(back.support, pinned().support);
}

#[test]
fn ingest_reports_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("invoices.csv");
    std::fs::write(
        &path,
        "invoice_id,customer_id,segment,issue_date,due_date,amount,payment_date,payment_terms_days\n\
         A,C1,CSB,2021-01-05,2021-01-20,100.00,2021-01-22,15\n\
         B,C1,CSB,2021-01-05,2021-01-20,-3.00,,15\n\
         C,C2,Retail,2021-01-06,2021-01-21,10.00,,15\n",
    )
    .unwrap();
    let err = pipeline::ingest(&path, None, &PipelineConfig::default().calendar()).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Data);
    let msg = err.to_string();
    assert!(msg.contains("invoices.csv:3"), "{msg}");
    assert!(msg.contains("invoices.csv:4"), "{msg}");
    assert!(!msg.contains("invoices.csv:2"), "{msg}");
}

#[test]
fn tuning_never_loses_to_the_defaults() {
    let mut cfg = PipelineConfig::default();
    cfg.tune.budget = 6;
    let (t, space) = pipeline::tune_pipeline(pinned(), &cfg).unwrap();
    assert!(t.result.best_loss <= t.default_loss);
    assert_eq!(t.result.history.len(), 6);
    assert!(space.contains(&t.result.best_params));
    let direct = pipeline::tuning_loss(pinned(), &t.best_config).unwrap();
    assert!((direct - t.result.best_loss).abs() < 1e-9, "{direct} vs {}", t.result.best_loss);

    cfg.tune.budget = 0;
    assert_eq!(pipeline::tune_pipeline(pinned(), &cfg).unwrap_err().kind(), ErrorKind::Validation);
}

#[test]
fn too_little_history_is_a_data_error() {
    let sc = SynthConfig { weeks: 40, holidays: Vec::new(), ..SynthConfig::default() };
    let ds = synthgen::generate(&sc).unwrap();
    let err = pipeline::compare(&ds, &PipelineConfig::default()).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Data, "{err}");
}

#[test]
fn report_timings_are_opt_in() {
    let mut cfg = PipelineConfig::default();
    let r = pipeline::run(pinned(), &cfg, false).unwrap();
    assert!(r.timings.is_none());
    let json: serde_json::Value = serde_json::to_value(&r).unwrap();
    assert!(json.get("timings").is_none());
    cfg.report.timings = true;
    let r = pipeline::run(pinned(), &cfg, false).unwrap();
    assert!(r.timings.unwrap().contains_key("forecast"));
}
