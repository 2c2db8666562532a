//! End-to-end runs: rolling-origin evaluation, H1/H2 comparison, tuning and
//! reports.

pub mod audit;
pub mod config;
pub mod report;
pub mod run;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use audit::{Audit, AuditEntry, AuditSummary};
pub use config::{PipelineConfig, Variant};
pub use run::{forecast_at, forecast_variant, ComponentShare, OriginContext, OriginForecast};

use crate::calendar::{FiscalCalendar, Week};
use crate::dataset::Dataset;
use crate::error::{Error, Result, StageExt};
use crate::eval::{
    accuracy_uplift, custom_loss, deviation_summary, final_score, mape_values, sliding_folds,
    variance_weighted_score, DeviationSummary, Fold, FoldScore, LossWeights, Span,
};
use crate::invoice::Segment;
use crate::lags::LagSpec;
use crate::series::WeeklySeries;
use crate::tune::{optimize, weights_from_increments, Dimension, ParamSpace, ParamValue, Params, TuneOptions, TuneResult};

/// Reads and validates `invoices.csv` and, when given, `support.csv`.
pub fn ingest(invoices: &Path, support: Option<&Path>, cal: &FiscalCalendar) -> Result<Dataset> {
    let inv = crate::io::read_invoices(invoices, cal).stage("ingest")?;
    let sup = match support {
        Some(p) => crate::io::read_support(p, cal).stage("ingest")?,
        None => BTreeMap::new(),
    };
    Ok(Dataset::new(inv, sup))
}

/// Loads the dataset named by `cfg.data`.
pub fn ingest_config(cfg: &PipelineConfig) -> Result<Dataset> {
    let Some(invoices) = &cfg.data.invoices else {
        return Err(Error::Config("data.invoices is not set".into()));
    };
    for p in std::iter::once(invoices).chain(&cfg.data.support) {
        if !p.exists() {
            return Err(Error::Config(format!("{} does not exist", p.display())));
        }
    }
    ingest(invoices, cfg.data.support.as_deref(), &cfg.calendar())
}

/// Variant-dependent input contract: H2 needs a support series, the pure
/// univariate baseline needs none.
pub fn check_inputs(dataset: &Dataset, cfg: &PipelineConfig) -> Result<()> {
    if cfg.variant == Variant::H2 && !cfg.baseline.pure_univariate && dataset.support.values().all(|s| s.is_empty()) {
        return Err(Error::Data("at least one support series required".into()));
    }
    if let Some(name) = &cfg.data.support_series {
        if !dataset.support.contains_key(name) {
            return Err(Error::Data(format!("support series {name:?} not found")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub index: usize,
    pub origin: Week,
    pub test: Span,
    pub weight: f64,
    pub mape: f64,
    pub forecast: Vec<f64>,
    pub actual: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub index: usize,
    pub end_week: Week,
    pub folds: Vec<FoldResult>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub variant: Variant,
    pub windows: Vec<WindowResult>,
    pub final_score: f64,
}

impl Evaluation {
    pub fn fold_mapes(&self, window: usize) -> Vec<f64> {
        self.windows.get(window).map_or_else(Vec::new, |w| w.folds.iter().map(|f| f.mape).collect())
    }
}

/// Evaluation windows, each a list of folds; window `i` ends `i · step` weeks
/// before the last observed week.
pub fn plan_windows(dataset: &Dataset, cfg: &PipelineConfig) -> Result<Vec<(Week, Vec<Fold>)>> {
    let cal = cfg.calendar();
    let y = dataset.collections(&cal)?;
    let (Some(start), Ok(last)) = (y.start(), dataset.last_observed_week(&cal)) else {
        return Err(Error::Data("dataset has no observed payments".into()));
    };
    let weights = cfg.fold_weights();
    if weights.len() != cfg.eval.n_folds {
        return Err(Error::Validation(format!("{} fold weights for {} folds", weights.len(), cfg.eval.n_folds)));
    }
    (0..cfg.eval.n_windows)
        .map(|i| {
            let end = last - (i * cfg.eval.window_step) as Week;
            let mut folds = sliding_folds(Span::new(start, end), cfg.eval.n_folds, cfg.eval.horizon, cfg.eval.min_train)?;
            for (f, w) in folds.iter_mut().zip(&weights) {
                f.weight = *w;
            }
            Ok((end, folds))
        })
        .collect()
}

/// Forecasts every fold of every window for each configuration. The
/// configurations must agree on everything but the variant-specific switches;
/// the first one supplies the shared per-origin parameters.
pub fn evaluate_many(dataset: &Dataset, configs: &[PipelineConfig], windows: &[(Week, Vec<Fold>)]) -> Result<(Vec<Evaluation>, Audit)> {
    let Some(base) = configs.first() else {
        return Err(Error::Validation("no configurations to evaluate".into()));
    };
    let cal = base.calendar();
    let actual_series = dataset.collections(&cal)?;
    let origins: Vec<Week> = windows
        .iter()
        .flat_map(|(_, folds)| folds.iter().map(|f| f.test.start - 1))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let per_origin = run::par_map(&origins, |&origin| -> Result<(Vec<WeeklySeries>, Audit)> {
        let mut ctx = OriginContext::new(dataset, base, origin)?;
        let forecasts = configs
            .iter()
            .map(|c| forecast_variant(&mut ctx, c).map(|f| f.forecast))
            .collect::<Result<Vec<_>>>()?;
        Ok((forecasts, ctx.audit))
    });
    let mut by_origin: BTreeMap<Week, Vec<WeeklySeries>> = BTreeMap::new();
    let mut audit = Audit::default();
    for (origin, r) in origins.iter().zip(per_origin) {
        let (f, a) = r?;
        by_origin.insert(*origin, f);
        audit.merge(a);
    }

    let mut evaluations = Vec::with_capacity(configs.len());
    for (ci, cfg) in configs.iter().enumerate() {
        let mut window_results = Vec::new();
        for (wi, (end, folds)) in windows.iter().enumerate() {
            let mut fold_results = Vec::new();
            for fold in folds {
                let origin = fold.test.start - 1;
                let forecast = by_origin[&origin][ci].values().to_vec();
                let actual = actual_series.slice(fold.test.start, fold.test.end).values().to_vec();
                let mape = mape_values(&actual, &forecast).stage("eval")?;
                fold_results.push(FoldResult { index: fold.index, origin, test: fold.test, weight: fold.weight, mape, forecast, actual });
            }
            let scores: Vec<FoldScore> = fold_results
                .iter()
                .map(|f| FoldScore { fold_index: f.index, mape: f.mape, weight: f.weight })
                .collect();
            let score = variance_weighted_score(&scores, cfg.eval.alpha).stage("eval")?;
            window_results.push(WindowResult { index: wi + 1, end_week: *end, folds: fold_results, score });
        }
        let final_score = final_score(&window_results.iter().map(|w| w.score).collect::<Vec<_>>())?;
        evaluations.push(Evaluation { variant: cfg.variant, windows: window_results, final_score });
    }
    Ok((evaluations, audit))
}

pub fn evaluate(dataset: &Dataset, cfg: &PipelineConfig) -> Result<(Evaluation, Audit)> {
    let windows = plan_windows(dataset, cfg)?;
    let (mut evals, audit) = evaluate_many(dataset, std::slice::from_ref(cfg), &windows)?;
    Ok((evals.remove(0), audit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastPoint {
    pub week: Week,
    pub week_start: NaiveDate,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: Variant,
    pub origin: Week,
    pub forecast: Vec<ForecastPoint>,
    pub regressors: Vec<String>,
    pub lag_spec: Option<LagSpec>,
    pub components: Vec<ComponentShare>,
    pub evaluation: Option<Evaluation>,
    /// Accuracy uplift over H1 on identical folds, when H1 was evaluated.
    pub uplift_vs_h1: Option<f64>,
    pub payment_deviation: BTreeMap<Segment, DeviationSummary>,
    pub audit: AuditSummary,
    /// Seconds per stage; only with `report.timings`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings: Option<BTreeMap<String, f64>>,
    pub config: PipelineConfig,
}

fn forecast_points(f: &WeeklySeries, cal: &FiscalCalendar) -> Result<Vec<ForecastPoint>> {
    f.iter()
        .map(|(week, value)| Ok(ForecastPoint { week, week_start: cal.first_date_of(week)?, value }))
        .collect()
}

fn build_report(
    dataset: &Dataset,
    cfg: &PipelineConfig,
    f: OriginForecast,
    evaluation: Option<Evaluation>,
    audit: &Audit,
) -> Result<RunReport> {
    let cal = cfg.calendar();
    Ok(RunReport {
        variant: cfg.variant,
        origin: f.origin,
        forecast: forecast_points(&f.forecast, &cal)?,
        regressors: f.regressors,
        lag_spec: f.lag_spec,
        components: f.shares,
        evaluation,
        uplift_vs_h1: None,
        payment_deviation: deviation_summary(&dataset.invoices),
        audit: audit.summary(),
        timings: None,
        config: cfg.clone(),
    })
}

#[derive(Default)]
struct Timer(BTreeMap<String, f64>);

impl Timer {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let r = f();
        *self.0.entry(stage.to_string()).or_default() += t.elapsed().as_secs_f64();
        r
    }

    fn into_report(self, cfg: &PipelineConfig) -> Option<BTreeMap<String, f64>> {
        cfg.report.timings.then_some(self.0)
    }
}

/// Forecast from the last observed week, optionally with the rolling
/// evaluation.
pub fn run(dataset: &Dataset, cfg: &PipelineConfig, with_evaluation: bool) -> Result<RunReport> {
    cfg.validate()?;
    check_inputs(dataset, cfg)?;
    let mut timer = Timer::default();
    let origin = dataset.last_observed_week(&cfg.calendar())?;
    let (f, mut audit) = timer.time("forecast", || forecast_at(dataset, cfg, origin))?;
    let evaluation = if with_evaluation {
        let (e, a) = timer.time("evaluate", || evaluate(dataset, cfg))?;
        audit.merge(a);
        Some(e)
    } else {
        None
    };
    let mut report = build_report(dataset, cfg, f, evaluation, &audit)?;
    report.timings = timer.into_report(cfg);
    Ok(report)
}

/// The full H2 run: forecast, walk-forward evaluation and uplift over H1.
pub fn run_h2(dataset: &Dataset, cfg: &PipelineConfig) -> Result<(WeeklySeries, RunReport)> {
    if cfg.variant != Variant::H2 {
        return Err(Error::Validation(format!("run_h2 needs variant h2, got {}", cfg.variant)));
    }
    let report = compare(dataset, cfg)?.h2;
    let forecast = WeeklySeries::new(
        report.forecast.first().map_or(report.origin + 1, |p| p.week),
        report.forecast.iter().map(|p| p.value).collect(),
    );
    Ok((forecast, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub h1: RunReport,
    pub h2: RunReport,
    /// `(score_H1 − score_H2) / score_H1 · 100` on the final scores.
    pub uplift_pct: f64,
    pub window_uplift_pct: Vec<f64>,
}

/// H1 and H2 on identical folds.
pub fn compare(dataset: &Dataset, cfg: &PipelineConfig) -> Result<CompareReport> {
    cfg.validate()?;
    let (h1, h2) = (cfg.as_h1(), cfg.as_h2());
    check_inputs(dataset, &h2)?;
    let mut timer = Timer::default();
    let windows = plan_windows(dataset, cfg)?;
    let (evals, audit) = timer.time("evaluate", || evaluate_many(dataset, &[h1.clone(), h2.clone()], &windows))?;
    let origin = dataset.last_observed_week(&cfg.calendar())?;
    let (f1, f2, ctx_audit) = timer.time("forecast", || -> Result<_> {
        let mut ctx = OriginContext::new(dataset, cfg, origin)?;
        let f1 = forecast_variant(&mut ctx, &h1)?;
        let f2 = forecast_variant(&mut ctx, &h2)?;
        Ok((f1, f2, ctx.audit))
    })?;
    let mut all = audit;
    all.merge(ctx_audit);
    let [e1, e2]: [Evaluation; 2] = evals.try_into().expect("two evaluations");
    let uplift_pct = accuracy_uplift(e1.final_score, e2.final_score)?;
    let window_uplift_pct = e1
        .windows
        .iter()
        .zip(&e2.windows)
        .map(|(a, b)| accuracy_uplift(a.score, b.score))
        .collect::<Result<Vec<_>>>()?;
    let timings = timer.into_report(cfg);
    let h1_report = build_report(dataset, &h1, f1, Some(e1), &all)?;
    let mut h2_report = build_report(dataset, &h2, f2, Some(e2), &all)?;
    h2_report.uplift_vs_h1 = Some(uplift_pct);
    h2_report.timings = timings;
    Ok(CompareReport { h1: h1_report, h2: h2_report, uplift_pct, window_uplift_pct })
}

/// Search space for the H2 pipeline. Ridges are searched in log10.
pub fn tune_space(n_folds: usize) -> Result<ParamSpace> {
    let mut dims = vec![
        Dimension::continuous("alpha", 0.0, 1.0),
        Dimension::integer("fourier_quarterly", 1, 4),
        Dimension::integer("fourier_yearly", 0, 6),
        Dimension::continuous("log10_ridge_changepoint", -1.0, 3.0),
        Dimension::continuous("log10_ridge_seasonal", -2.0, 2.0),
        Dimension::continuous("log10_ridge_regressor", -2.0, 2.0),
        Dimension::integer("gbt_n_trees", 20, 120),
        Dimension::integer("gbt_max_depth", 2, 5),
        Dimension::continuous("gbt_learning_rate", 0.03, 0.3),
        Dimension::integer("gbt_min_samples_leaf", 5, 40),
        Dimension::integer("window_short", 2, 8),
        Dimension::integer("window_long", 8, 26),
        Dimension::continuous("lag_threshold", 0.01, 0.2),
    ];
    for k in 1..=n_folds {
        dims.push(Dimension::continuous(&format!("fold_weight_increment_{k}"), 0.1, 1.0));
    }
    ParamSpace::new(dims)
}

fn num(p: &Params, key: &str) -> Result<f64> {
    p.get(key)
        .and_then(ParamValue::as_f64)
        .ok_or_else(|| Error::Validation(format!("missing tuning parameter {key}")))
}

/// The parameter point corresponding to `cfg`; fold weights are expressed as
/// increments only when they are the defaults.
pub fn params_of(cfg: &PipelineConfig) -> Params {
    let mut p = Params::new();
    let f = |v: f64| ParamValue::Float(v);
    let i = |v: i64| ParamValue::Int(v);
    let seas = &cfg.forecaster.seasonality;
    let order = |name: &str| seas.blocks.iter().find(|b| b.name == name).map_or(0, |b| b.fourier_order as i64);
    p.insert("alpha".into(), f(cfg.eval.alpha));
    p.insert("fourier_quarterly".into(), i(order("quarterly").max(1)));
    p.insert("fourier_yearly".into(), i(order("yearly")));
    p.insert("log10_ridge_changepoint".into(), f(cfg.forecaster.ridge.changepoint.log10()));
    p.insert("log10_ridge_seasonal".into(), f(cfg.forecaster.ridge.seasonal.log10()));
    p.insert("log10_ridge_regressor".into(), f(cfg.forecaster.ridge.regressor.log10()));
    p.insert("gbt_n_trees".into(), i(cfg.closure.n_trees as i64));
    p.insert("gbt_max_depth".into(), i(cfg.closure.max_depth as i64));
    p.insert("gbt_learning_rate".into(), f(cfg.closure.learning_rate));
    p.insert("gbt_min_samples_leaf".into(), i(cfg.closure.min_samples_leaf as i64));
    p.insert("window_short".into(), i(cfg.windows.short_len as i64));
    p.insert("window_long".into(), i(cfg.windows.long_len as i64));
    p.insert("lag_threshold".into(), f(cfg.lags.threshold));
    for k in 1..=cfg.eval.n_folds {
        p.insert(format!("fold_weight_increment_{k}"), f(1.0));
    }
    p
}

/// Applies a tuning point to a configuration.
pub fn apply_params(base: &PipelineConfig, p: &Params) -> Result<PipelineConfig> {
    let mut c = base.clone();
    let int = |key: &str| num(p, key).map(|v| v.round() as i64);
    c.eval.alpha = num(p, "alpha")?;
    c.forecaster.seasonality =
        crate::forecaster::SeasonalityConfig::quarterly_yearly(int("fourier_quarterly")? as u32, int("fourier_yearly")? as u32);
    c.forecaster.ridge.changepoint = 10f64.powf(num(p, "log10_ridge_changepoint")?);
    c.forecaster.ridge.seasonal = 10f64.powf(num(p, "log10_ridge_seasonal")?);
    c.forecaster.ridge.regressor = 10f64.powf(num(p, "log10_ridge_regressor")?);
    c.closure.n_trees = int("gbt_n_trees")? as usize;
    c.closure.max_depth = int("gbt_max_depth")? as usize;
    c.closure.learning_rate = num(p, "gbt_learning_rate")?;
    c.closure.min_samples_leaf = int("gbt_min_samples_leaf")? as usize;
    c.windows.short_len = int("window_short")? as u32;
    c.windows.long_len = int("window_long")? as u32;
    c.lags.threshold = num(p, "lag_threshold")?;
    let inc = (1..=c.eval.n_folds)
        .map(|k| num(p, &format!("fold_weight_increment_{k}")))
        .collect::<Result<Vec<_>>>()?;
    c.eval.fold_weights = Some(weights_from_increments(&inc)?);
    c.validate()?;
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub result: TuneResult,
    pub default_loss: f64,
    pub best_config: PipelineConfig,
}

/// The tuning loss of one configuration: the custom loss over the fold
/// MAPEs of the most recent evaluation window.
pub fn tuning_loss(dataset: &Dataset, cfg: &PipelineConfig) -> Result<f64> {
    let windows = plan_windows(dataset, cfg)?;
    let (evals, _) = evaluate_many(dataset, std::slice::from_ref(cfg), &windows[..1])?;
    let weights = LossWeights { weights: cfg.fold_weights(), alpha: cfg.eval.alpha };
    custom_loss(&evals[0].fold_mapes(0), &weights)
}

/// Bayesian (or random) search over the H2 pipeline. The configuration as
/// given is always the first trial.
pub fn tune_pipeline(dataset: &Dataset, cfg: &PipelineConfig) -> Result<(TuneReport, ParamSpace)> {
    cfg.validate()?;
    check_inputs(dataset, &cfg.as_h2())?;
    if cfg.tune.budget == 0 {
        return Err(Error::Validation("tuning budget must be >= 1".into()));
    }
    plan_windows(dataset, cfg)?;
    let base = cfg.as_h2();
    let space = tune_space(base.eval.n_folds)?;
    let start = params_of(&base);
    let mut options = TuneOptions::new(cfg.tune.budget, cfg.seed);
    options.strategy = cfg.tune.strategy;
    options.initial_points = if space.contains(&start) { vec![start] } else { Vec::new() };
    let mut objective = |p: &Params| -> Result<f64> {
        let c = apply_params(&base, p)?;
        tuning_loss(dataset, &c)
    };
    let result = optimize(&mut objective, &space, &options).stage("tune")?;
    let default_loss = result.history.first().map_or(f64::INFINITY, |t| t.loss);
    let best_config = apply_params(&base, &result.best_params)?;
    Ok((TuneReport { result, default_loss, best_config }, space))
}
