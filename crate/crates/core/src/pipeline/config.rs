//! Pipeline configuration. TOML on disk; every field has a default, and CLI
//! flags override file values.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::baseline::{Method, DEFAULT_SEASON};
use crate::calendar::{FiscalCalendar, Week, WEEKS_PER_YEAR};
use crate::closure::GbtParams;
use crate::error::{Error, Result};
use crate::forecaster::{Events, ForecasterConfig};
use crate::lags::{DEFAULT_MAX_LAG, DEFAULT_THRESHOLD};
use crate::tune::Strategy;
use crate::windows::{DEFAULT_LONG_WINDOW, DEFAULT_SHORT_WINDOW};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    H1,
    H2,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "h1" => Ok(Variant::H1),
            "h2" => Ok(Variant::H2),
            other => Err(Error::Validation(format!("unknown variant {other:?}, expected h1 or h2"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::H1 => "h1",
            Variant::H2 => "h2",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalendarConfig {
    pub fiscal_year_start: NaiveDate,
}

impl Default for CalendarConfig {
    fn default() -> Self {
        CalendarConfig { fiscal_year_start: NaiveDate::from_ymd_opt(2021, 1, 4).expect("valid date") }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub invoices: Option<PathBuf>,
    pub support: Option<PathBuf>,
    /// Support series to use; the first by name when unset.
    pub support_series: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowsConfig {
    pub enabled: bool,
    pub short_len: u32,
    pub long_len: u32,
}

impl Default for WindowsConfig {
    fn default() -> Self {
        WindowsConfig { enabled: true, short_len: DEFAULT_SHORT_WINDOW, long_len: DEFAULT_LONG_WINDOW }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LagsConfig {
    pub enabled: bool,
    pub max_lag: u32,
    pub threshold: f64,
}

impl Default for LagsConfig {
    fn default() -> Self {
        LagsConfig { enabled: true, max_lag: DEFAULT_MAX_LAG, threshold: DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub method: Method,
    pub season: usize,
    /// Season used to extend support series; needs two full seasons of
    /// history, otherwise `season` is used.
    pub support_season: usize,
    /// Forecast with the univariate model alone (no regressors at all).
    pub pure_univariate: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            method: Method::HoltWintersAdditive,
            season: DEFAULT_SEASON,
            support_season: WEEKS_PER_YEAR as usize,
            pure_univariate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub horizon: usize,
    pub n_folds: usize,
    /// Rolling windows; window `i` ends `i * window_step` weeks before the
    /// last observed week.
    pub n_windows: usize,
    pub window_step: usize,
    pub min_train: usize,
    pub alpha: f64,
    /// Normalized fold weights; `f / Σ f` when unset.
    pub fold_weights: Option<Vec<f64>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { horizon: 13, n_folds: 3, n_windows: 3, window_step: 4, min_train: 52, alpha: 0.5, fold_weights: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub budget: usize,
    pub strategy: Strategy,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig { budget: 30, strategy: Strategy::Bayesian }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Include wall-clock stage timings. Off by default: timings make reports
    /// differ between otherwise identical runs.
    pub timings: bool,
}

/// A named event recurring in the given weeks of every fiscal year
/// (1..=52), plus any explicit absolute weeks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    pub name: String,
    #[serde(default)]
    pub weeks_of_year: Vec<u32>,
    #[serde(default)]
    pub absolute_weeks: Vec<Week>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub variant: Variant,
    pub calendar: CalendarConfig,
    pub data: DataConfig,
    pub closure: GbtParams,
    pub windows: WindowsConfig,
    pub lags: LagsConfig,
    pub forecaster: ForecasterConfig,
    pub baseline: BaselineConfig,
    pub eval: EvalConfig,
    pub tune: TuneConfig,
    pub report: ReportConfig,
    pub events: Vec<EventConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 7,
            variant: Variant::H2,
            calendar: CalendarConfig::default(),
            data: DataConfig::default(),
            closure: GbtParams::default(),
            windows: WindowsConfig::default(),
            lags: LagsConfig::default(),
            forecaster: ForecasterConfig::default(),
            baseline: BaselineConfig::default(),
            eval: EvalConfig::default(),
            tune: TuneConfig::default(),
            report: ReportConfig::default(),
            events: vec![EventConfig { name: "holiday".into(), weeks_of_year: vec![47], absolute_weeks: Vec::new() }],
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data.invoices, &mut cfg.data.support].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn calendar(&self) -> FiscalCalendar {
        FiscalCalendar::new(self.calendar.fiscal_year_start)
    }

    /// The H1 view of this config: same parameters, no windows, no lags.
    pub fn as_h1(&self) -> PipelineConfig {
        let mut c = self.clone();
        c.variant = Variant::H1;
        c
    }

    pub fn as_h2(&self) -> PipelineConfig {
        let mut c = self.clone();
        c.variant = Variant::H2;
        c
    }

    pub fn uses_windows(&self) -> bool {
        self.variant == Variant::H2 && self.windows.enabled && !self.baseline.pure_univariate
    }

    pub fn uses_lags(&self) -> bool {
        self.variant == Variant::H2 && self.lags.enabled && !self.baseline.pure_univariate
    }

    pub fn fold_weights(&self) -> Vec<f64> {
        self.eval
            .fold_weights
            .clone()
            .unwrap_or_else(|| crate::eval::default_fold_weights(self.eval.n_folds))
    }

    pub fn validate(&self) -> Result<()> {
        self.closure.validate()?;
        self.forecaster.validate()?;
        let w = &self.windows;
        if w.short_len == 0 || w.long_len == 0 {
            return Err(Error::Validation("window lengths must be >= 1".into()));
        }
        if !(self.lags.threshold >= 0.0) {
            return Err(Error::Validation("lag threshold must be >= 0".into()));
        }
        let e = &self.eval;
        if e.horizon == 0 || e.n_folds == 0 || e.n_windows == 0 {
            return Err(Error::Validation("horizon, n_folds and n_windows must be >= 1".into()));
        }
        if e.n_windows > 1 && e.window_step == 0 {
            return Err(Error::Validation("window_step must be >= 1 with several windows".into()));
        }
        if !(0.0..=1.0).contains(&e.alpha) {
            return Err(Error::Validation(format!("alpha must be in [0, 1], got {}", e.alpha)));
        }
        let fw = self.fold_weights();
        if fw.len() != e.n_folds
            || fw.iter().any(|v| !(*v > 0.0))
            || (fw.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Validation("fold_weights must be n_folds positive values summing to 1".into()));
        }
        if self.baseline.season < 1 || self.baseline.support_season < 1 {
            return Err(Error::Validation("baseline seasons must be >= 1".into()));
        }
        for ev in &self.events {
            if ev.weeks_of_year.iter().any(|w| *w < 1 || *w > WEEKS_PER_YEAR) {
                return Err(Error::Validation(format!("event {}: weeks_of_year must be in 1..=52", ev.name)));
            }
        }
        Ok(())
    }

    /// Event week sets over `1..=last_week`.
    pub fn event_weeks(&self, last_week: Week) -> Events {
        let mut out: Events = BTreeMap::new();
        for ev in &self.events {
            let set: &mut BTreeSet<Week> = out.entry(ev.name.clone()).or_default();
            for w in 1..=last_week {
                let woy = (w - 1).rem_euclid(WEEKS_PER_YEAR as Week) as u32 + 1;
                if ev.weeks_of_year.contains(&woy) {
                    set.insert(w);
                }
            }
            set.extend(ev.absolute_weeks.iter().copied().filter(|w| *w >= 1 && *w <= last_week));
        }
        out
    }
}
