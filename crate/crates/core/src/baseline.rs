//! Univariate baselines: seasonal naive and additive Holt-Winters.

use serde::{Deserialize, Serialize};

use crate::calendar::{Week, WEEKS_PER_QUARTER};
use crate::error::{Error, Result};
use crate::series::WeeklySeries;

pub const DEFAULT_SEASON: usize = WEEKS_PER_QUARTER as usize;

const ALPHA_GRID: [f64; 9] = [0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.7, 0.9];
const BETA_GRID: [f64; 6] = [0.0, 0.01, 0.02, 0.05, 0.1, 0.2];
const GAMMA_GRID: [f64; 7] = [0.0, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SeasonalNaive,
    HoltWintersAdditive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnivariateParams {
    pub season: usize,
    /// Fixed smoothing parameters; grid-searched on in-sample SSE when absent.
    pub smoothing: Option<Smoothing>,
}

impl Default for UnivariateParams {
    fn default() -> Self {
        UnivariateParams { season: DEFAULT_SEASON, smoothing: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateModel {
    pub method: Method,
    pub season: usize,
    pub smoothing: Option<Smoothing>,
    pub level: f64,
    pub trend: f64,
    /// Seasonal state for the weeks `last_week + 1 ..= last_week + season`.
    pub seasonal: Vec<f64>,
    pub last_week: Week,
    /// One-step-ahead in-sample predictions, aligned with the training series.
    pub fitted: Vec<f64>,
    pub sse: f64,
}

struct HwRun {
    level: f64,
    trend: f64,
    seasonal: Vec<f64>,
    fitted: Vec<f64>,
    sse: f64,
}

/// Initial states from the first two seasons: linear fit through the season
/// means, seasonal offsets of the first season around that line.
fn hw_init(y: &[f64], m: usize) -> (f64, f64, Vec<f64>) {
    let mean1 = y[..m].iter().sum::<f64>() / m as f64;
    let mean2 = y[m..2 * m].iter().sum::<f64>() / m as f64;
    let trend = (mean2 - mean1) / m as f64;
    let centre = (m as f64 - 1.0) / 2.0;
    let seasonal = (0..m).map(|i| y[i] - (mean1 + trend * (i as f64 - centre))).collect();
    (mean1 + trend * centre, trend, seasonal)
}

fn hw_run(y: &[f64], m: usize, s: Smoothing) -> HwRun {
    let (mut level, mut trend, mut seasonal) = hw_init(y, m);
    let mut fitted: Vec<f64> = (0..m).map(|i| level + trend * (i as f64 - (m as f64 - 1.0)) + seasonal[i]).collect();
    let mut sse = 0.0;
    for (t, &obs) in y.iter().enumerate().skip(m) {
        let k = t % m;
        let pred = level + trend + seasonal[k];
        fitted.push(pred);
        sse += (obs - pred).powi(2);
        let prev_level = level;
        level = s.alpha * (obs - seasonal[k]) + (1.0 - s.alpha) * (level + trend);
        trend = s.beta * (level - prev_level) + (1.0 - s.beta) * trend;
        seasonal[k] = s.gamma * (obs - level) + (1.0 - s.gamma) * seasonal[k];
    }
    // Rotate so that seasonal[0] belongs to the first week after the data.
    let n = y.len();
    let rotated = (0..m).map(|h| seasonal[(n + h) % m]).collect();
    HwRun { level, trend, seasonal: rotated, fitted, sse }
}

pub fn fit_univariate(series: &WeeklySeries, method: Method, params: UnivariateParams) -> Result<UnivariateModel> {
    let m = params.season;
    if m == 0 {
        return Err(Error::Validation("season length must be >= 1".into()));
    }
    let y = series.values();
    if y.len() < 2 * m {
        return Err(Error::Data(format!(
            "univariate baseline needs at least {} weeks (two seasons), got {}",
            2 * m,
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite value in baseline input".into()));
    }
    let last_week = series.end().expect("nonempty");
    match method {
        Method::SeasonalNaive => {
            let n = y.len();
            let fitted: Vec<f64> = (0..n).map(|t| if t < m { y[t] } else { y[t - m] }).collect();
            let sse = (m..n).map(|t| (y[t] - y[t - m]).powi(2)).sum();
            Ok(UnivariateModel {
                method,
                season: m,
                smoothing: None,
                level: 0.0,
                trend: 0.0,
                seasonal: y[n - m..].to_vec(),
                last_week,
                fitted,
                sse,
            })
        }
        Method::HoltWintersAdditive => {
            let (smoothing, run) = match params.smoothing {
                Some(s) => {
                    for (name, v) in [("alpha", s.alpha), ("beta", s.beta), ("gamma", s.gamma)] {
                        if !(0.0..=1.0).contains(&v) {
                            return Err(Error::Validation(format!("{name} must be in [0, 1], got {v}")));
                        }
                    }
                    (s, hw_run(y, m, s))
                }
                None => grid_search(y, m),
            };
            Ok(UnivariateModel {
                method,
                season: m,
                smoothing: Some(smoothing),
                level: run.level,
                trend: run.trend,
                seasonal: run.seasonal,
                last_week,
                fitted: run.fitted,
                sse: run.sse,
            })
        }
    }
}

fn grid_search(y: &[f64], m: usize) -> (Smoothing, HwRun) {
    let mut best: Option<(Smoothing, HwRun)> = None;
    for &alpha in &ALPHA_GRID {
        for &beta in &BETA_GRID {
            for &gamma in &GAMMA_GRID {
                let s = Smoothing { alpha, beta, gamma };
                let run = hw_run(y, m, s);
                if best.as_ref().is_none_or(|b| run.sse < b.1.sse) {
                    best = Some((s, run));
                }
            }
        }
    }
    best.expect("grid is nonempty")
}

impl UnivariateModel {
    /// Forecast for `last_week + 1 ..= last_week + horizon`.
    pub fn forecast(&self, horizon: usize) -> WeeklySeries {
        let m = self.season;
        let values = (1..=horizon)
            .map(|h| match self.method {
                Method::SeasonalNaive => self.seasonal[(h - 1) % m],
                Method::HoltWintersAdditive => self.level + h as f64 * self.trend + self.seasonal[(h - 1) % m],
            })
            .collect();
        WeeklySeries::new(self.last_week + 1, values)
    }

    pub fn fitted_series(&self) -> WeeklySeries {
        WeeklySeries::new(self.last_week + 1 - self.fitted.len() as i64, self.fitted.clone())
    }
}

/// Convenience: fit then forecast; the training span followed by the horizon.
pub fn fit_and_forecast(series: &WeeklySeries, method: Method, params: UnivariateParams, horizon: usize) -> Result<WeeklySeries> {
    Ok(fit_univariate(series, method, params)?.forecast(horizon))
}

/// Extends `series` through `through_week` with a Holt-Winters forecast; short
/// series fall back to repeating the mean of the last season.
pub fn extend_with_forecast(series: &WeeklySeries, through_week: Week, season: usize) -> Result<WeeklySeries> {
    let Some(end) = series.end() else {
        return Err(Error::MissingData("cannot extend an empty series".into()));
    };
    if through_week <= end {
        return Ok(series.clone());
    }
    let horizon = (through_week - end) as usize;
    let more: Vec<f64> = if series.len() >= 2 * season {
        fit_univariate(series, Method::HoltWintersAdditive, UnivariateParams { season, smoothing: None })?
            .forecast(horizon)
            .values()
            .to_vec()
    } else {
        let tail = &series.values()[series.len().saturating_sub(season)..];
        vec![tail.iter().sum::<f64>() / tail.len() as f64; horizon]
    };
    Ok(series.extended(&more))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seasonal_naive_repeats_last_season() {
        let s = WeeklySeries::new(1, (0..39).map(|i| (i % 13) as f64 * 2.0 + 1.0).collect());
        let m = fit_univariate(&s, Method::SeasonalNaive, UnivariateParams::default()).unwrap();
        let f = m.forecast(26);
        for (w, v) in f.iter() {
            assert_eq!(v, s.get(w - 13).unwrap_or_else(|| f.get(w - 13).unwrap()));
        }
    }

    #[test]
    fn constant_series_holt_winters() {
        let s = WeeklySeries::constant(1, 52, 42.0);
        let f = fit_and_forecast(&s, Method::HoltWintersAdditive, UnivariateParams::default(), 13).unwrap();
        assert_eq!(f.len(), 13);
        assert!(f.values().iter().all(|v| (v - 42.0).abs() < 1e-6));
    }

    #[test]
    fn linear_series_extrapolates() {
        let s = WeeklySeries::new(1, (1..=104).map(|t| t as f64).collect());
        let f = fit_and_forecast(&s, Method::HoltWintersAdditive, UnivariateParams::default(), 13).unwrap();
        for (w, v) in f.iter() {
            assert!((v - w as f64).abs() / (w as f64) < 0.05);
        }
    }

    #[test]
    fn too_short_is_data_error() {
        let s = WeeklySeries::constant(1, 20, 1.0);
        assert!(matches!(
            fit_univariate(&s, Method::HoltWintersAdditive, UnivariateParams::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn fitted_aligned_with_training() {
        let s = WeeklySeries::new(5, (0..40).map(|i| 10.0 + (i as f64 * 0.7).sin()).collect());
        let m = fit_univariate(&s, Method::HoltWintersAdditive, UnivariateParams::default()).unwrap();
        let fitted = m.fitted_series();
        assert_eq!(fitted.start(), s.start());
        assert_eq!(fitted.len(), s.len());
    }

    #[test]
    fn extension_keeps_history() {
        let s = WeeklySeries::new(1, (0..30).map(|i| i as f64).collect());
        let e = extend_with_forecast(&s, 35, 13).unwrap();
        assert_eq!(e.end(), Some(35));
        assert_eq!(&e.values()[..30], s.values());
    }
}
