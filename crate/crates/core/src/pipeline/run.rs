//! One forecast at one origin week. Everything a forecast reads is derived
//! from the dataset censored at the end of the origin week.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::audit::Audit;
use super::config::{PipelineConfig, Variant};
use crate::baseline::{extend_with_forecast, fit_univariate, UnivariateModel, UnivariateParams};
use crate::calendar::{FiscalCalendar, Week};
use crate::closure::{ClosureModel, ClosurePredictor, GbtModel};
use crate::dataset::Dataset;
use crate::error::{Error, Result, StageExt};
use crate::forecaster::{self, AdditiveModel, ComponentKind, Decomposition, Events, Regressors};
use crate::invoice::Invoice;
use crate::lags::{apply_lags, select_lags_excluding, LagSpec};
use crate::money::Money;
use crate::profiles::ProfileBook;
use crate::series::WeeklySeries;
use crate::windows::{historical_regressor, rollback_anchors};

pub const GROUP_AR: &str = "ar_univariate";
pub const GROUP_SUPPORT_RAW: &str = "support_raw";
pub const GROUP_SUPPORT_LAGGED: &str = "support_lagged";
pub const GROUP_WINDOW_SHORT: &str = "window_short";
pub const GROUP_WINDOW_LONG: &str = "window_long";
pub const GROUP_EVENTS: &str = "events";

/// Origin-level artifacts shared by every variant forecast from that origin.
pub struct OriginContext {
    pub origin: Week,
    pub horizon: usize,
    pub cutoff: NaiveDate,
    pub cal: FiscalCalendar,
    pub visible: Dataset,
    /// Realized collections through the origin.
    pub collections: WeeklySeries,
    pub support_name: Option<String>,
    pub support: Option<WeeklySeries>,
    /// Support extended through `origin + horizon` with a univariate forecast.
    pub support_extended: Option<WeeklySeries>,
    pub closure: GbtModel,
    pub book: ProfileBook,
    /// Realized collections plus open invoices predicted to have closed by the
    /// origin: the univariate baseline's input.
    pub baseline_input: WeeklySeries,
    pub baseline_model: UnivariateModel,
    pub data_start: Week,
    pub train_start: Week,
    pub events: Events,
    pub audit: Audit,
}

fn max_invoice_date(invoices: &[Invoice]) -> Option<NaiveDate> {
    invoices.iter().flat_map(|i| std::iter::once(i.issue_date).chain(i.payment_date)).max()
}

fn series_last_date(s: &WeeklySeries, cal: &FiscalCalendar) -> Option<NaiveDate> {
    s.end().and_then(|w| cal.last_date_of(w).ok())
}

impl OriginContext {
    /// `cfg` supplies the parameters shared by H1 and H2 (closure model,
    /// baseline, windows and lag bounds used for the common training span).
    pub fn new(dataset: &Dataset, cfg: &PipelineConfig, origin: Week) -> Result<OriginContext> {
        let cal = cfg.calendar();
        let horizon = cfg.eval.horizon;
        let cutoff = cal.last_date_of(origin).stage("ingest")?;
        let visible = dataset.censor(origin, &cal).stage("ingest")?;
        let mut audit = Audit::default();
        audit.record(origin, "ingest", cutoff, max_invoice_date(&visible.invoices));
        if visible.invoices.is_empty() {
            return Err(Error::Data(format!("no invoices issued by origin week {origin}"))).stage("ingest");
        }

        let mut collections = visible.collections(&cal).stage("collections")?;
        let Some(y_start) = collections.start() else {
            return Err(Error::Data(format!("no payments observed by origin week {origin}"))).stage("collections");
        };
        let pad = (origin - collections.end().unwrap_or(origin)).max(0) as usize;
        collections = collections.extended(&vec![0.0; pad]);

        let (support_name, support) = match &cfg.data.support_series {
            Some(name) => match visible.support.get(name) {
                Some(s) => (Some(name.clone()), Some(s.clone())),
                None => {
                    return Err(Error::Data(format!("support series {name:?} not found"))).stage("ingest");
                }
            },
            None => match visible.support.iter().next() {
                Some((n, s)) => (Some(n.clone()), Some(s.clone())),
                None => (None, None),
            },
        };
        let support = support.filter(|s| !s.is_empty());
        let horizon_end = origin + horizon as Week;
        let support_extended = match &support {
            Some(s) => {
                audit.record(origin, "support_forecast", cutoff, series_last_date(s, &cal));
                let season = if s.len() >= 2 * cfg.baseline.support_season {
                    cfg.baseline.support_season
                } else {
                    cfg.baseline.season
                };
                Some(extend_with_forecast(s, horizon_end, season).stage("support_forecast")?)
            }
            None => None,
        };

        let book = ProfileBook::new(&visible.invoices, cutoff);
        audit.record(origin, "profiles", cutoff, max_invoice_date(&visible.invoices));
        let mut closure = ClosureModel::new(cfg.closure);
        closure.train(&visible.invoices, &book, &cal).stage("closure")?;
        let closed: Vec<Invoice> = visible.invoices.iter().filter(|i| i.is_closed()).cloned().collect();
        audit.record(origin, "closure", cutoff, max_invoice_date(&closed));
        let closure = closure.model.expect("trained");

        let baseline_input = baseline_input(&visible.invoices, &collections, &closure, &book, origin, &cal).stage("baseline")?;
        audit.record(origin, "baseline", cutoff, series_last_date(&baseline_input, &cal));
        let params = UnivariateParams { season: cfg.baseline.season, smoothing: None };
        let baseline_model = fit_univariate(&baseline_input, cfg.baseline.method, params).stage("baseline")?;

        let data_start = cal.week_index(visible.invoices.iter().map(|i| i.issue_date).min().expect("nonempty")).stage("ingest")?;
        let earliest_anchor = |len: u32| rollback_anchors(origin, len, usize::MAX, data_start).last().copied();
        let mut train_start = y_start + cfg.baseline.season as Week;
        for len in [cfg.windows.short_len, cfg.windows.long_len] {
            if let Some(a) = earliest_anchor(len) {
                train_start = train_start.max(a + 1);
            }
        }
        if let Some(s) = &support {
            train_start = train_start.max(s.start().unwrap_or(1) + cfg.lags.max_lag as Week);
        }
        let n_features = 2 + cfg.forecaster.n_changepoints as i64 + 8;
        if origin - train_start + 1 < n_features.max(cfg.baseline.season as i64) {
            return Err(Error::Data(format!(
                "origin {origin}: training span {train_start}..={origin} is too short"
            )))
            .stage("forecaster");
        }
        let events = cfg.event_weeks(horizon_end);

        Ok(OriginContext {
            origin,
            horizon,
            cutoff,
            cal,
            visible,
            collections,
            support_name,
            support,
            support_extended,
            closure,
            book,
            baseline_input,
            baseline_model,
            data_start,
            train_start,
            events,
            audit,
        })
    }

    pub fn horizon_weeks(&self) -> Vec<Week> {
        (self.origin + 1..=self.origin + self.horizon as Week).collect()
    }

    pub fn train_weeks(&self) -> Vec<Week> {
        (self.train_start..=self.origin).collect()
    }
}

fn baseline_input(
    invoices: &[Invoice],
    collections: &WeeklySeries,
    closure: &GbtModel,
    book: &ProfileBook,
    origin: Week,
    cal: &FiscalCalendar,
) -> Result<WeeklySeries> {
    let mut extra: BTreeMap<Week, Money> = BTreeMap::new();
    for inv in invoices.iter().filter(|i| !i.is_closed()) {
        let profile = book.profile_at(&inv.customer_id, inv.segment, inv.issue_date);
        let date = closure.predict_close_date(inv, &profile, cal)?;
        if let Ok(w) = cal.week_index(date) {
            if w <= origin {
                *extra.entry(w).or_default() += inv.amount;
            }
        }
    }
    let start = collections.start().expect("nonempty");
    let values = collections
        .iter()
        .map(|(w, v)| v + extra.get(&w).map_or(0.0, |m| m.to_f64()))
        .collect();
    // Overdue predictions dated before the first payment week are dropped.
    Ok(WeeklySeries::new(start, values))
}

/// A forecast from one origin for one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginForecast {
    pub variant: Variant,
    pub origin: Week,
    pub train_start: Week,
    pub forecast: WeeklySeries,
    pub regressors: Vec<String>,
    pub lag_spec: Option<LagSpec>,
    pub model: Option<AdditiveModel>,
    /// Component shares over the training span.
    pub shares: Vec<ComponentShare>,
    /// Per-week components over the training span and the horizon.
    #[serde(skip)]
    pub decomposition: Option<Decomposition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentShare {
    pub name: String,
    pub kind: ComponentKind,
    pub share: f64,
}

/// Fills weeks after the series end through `through` with `value`.
fn pad_with(s: &WeeklySeries, through: Week, value: f64) -> WeeklySeries {
    let n = (through - s.end().unwrap_or(through)).max(0) as usize;
    s.extended(&vec![value; n])
}

fn mean_over(s: &WeeklySeries, from: Week, to: Week) -> f64 {
    let v = s.slice(from, to);
    if v.is_empty() { 0.0 } else { v.sum() / v.len() as f64 }
}

pub fn forecast_variant(ctx: &mut OriginContext, cfg: &PipelineConfig) -> Result<OriginForecast> {
    let origin = ctx.origin;
    let horizon_end = origin + ctx.horizon as Week;
    let weeks = ctx.horizon_weeks();

    if cfg.baseline.pure_univariate {
        ctx.audit.use_group(GROUP_AR);
        return Ok(OriginForecast {
            variant: cfg.variant,
            origin,
            train_start: ctx.baseline_input.start().unwrap_or(origin),
            forecast: ctx.baseline_model.forecast(ctx.horizon),
            regressors: vec![GROUP_AR.into()],
            lag_spec: None,
            model: None,
            shares: Vec::new(),
            decomposition: None,
        });
    }

    let mut regressors = Regressors::new();
    let ar = ctx.baseline_model.fitted_series().extended(ctx.baseline_model.forecast(ctx.horizon).values());
    regressors.insert(GROUP_AR.into(), ar);
    ctx.audit.use_group(GROUP_AR);

    let mut lag_spec = None;
    if let (Some(support), Some(extended)) = (&ctx.support, &ctx.support_extended) {
        if cfg.uses_lags() {
            let target = ctx.collections.slice(ctx.collections.start().unwrap_or(1), origin);
            ctx.audit.record(origin, "lags", ctx.cutoff, series_last_date(support, &ctx.cal).max(series_last_date(&target, &ctx.cal)));
            let event_weeks: BTreeSet<Week> = ctx.events.values().flatten().copied().collect();
            let spec = select_lags_excluding(support, &target, &ctx.cal, cfg.lags.max_lag, cfg.lags.threshold, &|w| {
                event_weeks.contains(&w)
            })
            .stage("lags")?;
            regressors.insert(GROUP_SUPPORT_LAGGED.into(), apply_lags(extended, &spec, &ctx.cal));
            ctx.audit.use_group(GROUP_SUPPORT_LAGGED);
            lag_spec = Some(spec);
        } else {
            regressors.insert(GROUP_SUPPORT_RAW.into(), extended.clone());
            ctx.audit.use_group(GROUP_SUPPORT_RAW);
        }
    }

    if cfg.uses_windows() {
        ctx.audit.record(origin, "windows", ctx.cutoff, max_invoice_date(&ctx.visible.invoices));
        for (name, len) in [(GROUP_WINDOW_SHORT, cfg.windows.short_len), (GROUP_WINDOW_LONG, cfg.windows.long_len)] {
            let hist = historical_regressor(&ctx.visible.invoices, &ctx.closure, &ctx.book, origin, len, ctx.data_start, &ctx.cal)
                .stage("windows")?;
            // Beyond its window the regressor carries no information: hold it
            // at its training mean, which the standardized column maps to 0.
            let fill = mean_over(&hist, ctx.train_start, origin);
            regressors.insert(name.into(), pad_with(&hist, horizon_end, fill));
            ctx.audit.use_group(name);
        }
    }

    let events: Events = ctx.events.clone();
    if !events.is_empty() {
        ctx.audit.use_group(GROUP_EVENTS);
    }
    let train = ctx.collections.slice(ctx.train_start, origin);
    ctx.audit.record(origin, "forecaster", ctx.cutoff, series_last_date(&train, &ctx.cal));
    let model = forecaster::fit(&train, &cfg.forecaster, &regressors, &events).stage("forecaster")?;
    let forecast = forecaster::predict(&model, &weeks, &regressors, &events).stage("forecaster")?;
    let shares = forecaster::decompose(&model, &ctx.train_weeks(), &regressors, &events).stage("forecaster")?;
    let all_weeks: Vec<Week> = ctx.train_weeks().into_iter().chain(weeks.iter().copied()).collect();
    let decomposition = forecaster::decompose(&model, &all_weeks, &regressors, &events).stage("forecaster")?;
    Ok(OriginForecast {
        variant: cfg.variant,
        origin,
        train_start: ctx.train_start,
        forecast,
        regressors: regressors.keys().cloned().collect(),
        lag_spec,
        shares: shares
            .components
            .iter()
            .map(|c| ComponentShare { name: c.name.clone(), kind: c.kind, share: c.share })
            .collect(),
        model: Some(model),
        decomposition: Some(decomposition),
    })
}

/// Convenience: build the origin context and forecast one variant.
pub fn forecast_at(dataset: &Dataset, cfg: &PipelineConfig, origin: Week) -> Result<(OriginForecast, Audit)> {
    let mut ctx = OriginContext::new(dataset, cfg, origin)?;
    let f = forecast_variant(&mut ctx, cfg)?;
    Ok((f, ctx.audit))
}

/// Applies `f` to every item on scoped threads; results keep input order.
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    if threads <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                results.lock().expect("poisoned")[i] = Some(r);
            });
        }
    });
    slots.into_iter().map(|r| r.expect("every item processed")).collect()
}
