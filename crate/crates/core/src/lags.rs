//! Quarter-regime lag selection for support series and the lag-weighted ridge.
//!
//! Lags are scored by incremental R² on the weeks of one regime (Q4 or
//! non-Q4). Selection is forward stepwise: the first lag is the best marginal
//! scorer (the plain `score_lags` value), every further lag must add at least
//! `threshold` of explained variance on top of the lags already retained.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calendar::{FiscalCalendar, Week, WEEKS_PER_YEAR};
use crate::error::{Error, Result};
use crate::linalg::{ols_fit, penalized_lstsq, residual_sum_squares};
use crate::series::WeeklySeries;

pub const DEFAULT_MAX_LAG: u32 = 13;
pub const DEFAULT_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    NonQ4,
    Q4,
}

impl Regime {
    pub fn of_week(week: Week) -> Regime {
        if FiscalCalendar::quarter_unchecked(week) == 4 {
            Regime::Q4
        } else {
            Regime::NonQ4
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagTerm {
    pub lag: u32,
    pub coefficient: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeLags {
    pub terms: Vec<LagTerm>,
    pub intercept: f64,
    /// Marginal score of every candidate lag, index = lag.
    pub marginal_scores: Vec<f64>,
    pub n_weeks: usize,
}

impl RegimeLags {
    pub fn lags(&self) -> Vec<u32> {
        self.terms.iter().map(|t| t.lag).collect()
    }

    pub fn max_lag(&self) -> u32 {
        self.terms.iter().map(|t| t.lag).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSpec {
    pub non_q4: RegimeLags,
    pub q4: RegimeLags,
    /// True when Q4 had too little history and copies the non-Q4 fit.
    pub q4_fallback: bool,
    pub max_lag: u32,
    pub selection_threshold: f64,
}

impl LagSpec {
    pub fn regime(&self, r: Regime) -> &RegimeLags {
        match r {
            Regime::NonQ4 => &self.non_q4,
            Regime::Q4 => &self.q4,
        }
    }

    /// Same lag list for both regimes; handy for tests and fixed specs.
    pub fn uniform(terms: &[(u32, f64)]) -> LagSpec {
        let max_lag = terms.iter().map(|t| t.0).max().unwrap_or(0);
        let reg = RegimeLags {
            terms: terms.iter().map(|&(lag, coefficient)| LagTerm { lag, coefficient, score: f64::NAN }).collect(),
            intercept: 0.0,
            marginal_scores: Vec::new(),
            n_weeks: 0,
        };
        LagSpec { non_q4: reg.clone(), q4: reg, q4_fallback: false, max_lag, selection_threshold: DEFAULT_THRESHOLD }
    }

    pub fn with_regimes(non_q4: &[(u32, f64)], q4: &[(u32, f64)]) -> LagSpec {
        let mut spec = LagSpec::uniform(non_q4);
        spec.q4 = LagSpec::uniform(q4).non_q4;
        spec.max_lag = spec.non_q4.max_lag().max(spec.q4.max_lag());
        spec
    }

    pub fn largest_selected_lag(&self) -> u32 {
        self.non_q4.max_lag().max(self.q4.max_lag())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, reg) in [("non_q4", &self.non_q4), ("q4", &self.q4)] {
            if reg.terms.is_empty() {
                return Err(Error::Validation(format!("lag spec regime {name} has no lags")));
            }
            let mut seen = BTreeSet::new();
            for t in &reg.terms {
                if t.lag > self.max_lag || !seen.insert(t.lag) {
                    return Err(Error::Validation(format!(
                        "lag spec regime {name}: lag {} duplicated or above max_lag {}",
                        t.lag, self.max_lag
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Regression rows: weeks of `target` inside the mask whose full lag history
/// `w − max_lag ..= w` exists in `support`.
struct LagRows {
    weeks: Vec<Week>,
    y: Vec<f64>,
    /// `cols[l][i]` = support at `weeks[i] − l`.
    cols: Vec<Vec<f64>>,
}

fn lag_rows(support: &WeeklySeries, target: &WeeklySeries, mask: &dyn Fn(Week) -> bool, max_lag: u32) -> LagRows {
    let mut rows = LagRows { weeks: Vec::new(), y: Vec::new(), cols: vec![Vec::new(); max_lag as usize + 1] };
    for (w, y) in target.iter() {
        if !mask(w) {
            continue;
        }
        let hist: Option<Vec<f64>> = (0..=max_lag as i64).map(|l| support.get(w - l)).collect();
        if let Some(hist) = hist {
            rows.weeks.push(w);
            rows.y.push(y);
            for (col, v) in rows.cols.iter_mut().zip(hist) {
                col.push(v);
            }
        }
    }
    rows
}

fn total_ss(y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - mean).powi(2)).sum()
}

/// Residual sum of squares of `y ~ 1 + cols[lags]`; `None` when the design is
/// rank deficient.
fn rss_with(rows: &LagRows, lags: &[u32]) -> Option<f64> {
    let n = rows.y.len();
    let x = DMatrix::from_fn(n, lags.len() + 1, |i, j| if j == 0 { 1.0 } else { rows.cols[lags[j - 1] as usize][i] });
    let y = DVector::from_column_slice(&rows.y);
    let beta = ols_fit(&x, &y, 0.0).ok()?;
    Some(residual_sum_squares(&x, &y, &beta))
}

fn incremental_r2(rows: &LagRows, sst: f64, base: &[u32], base_rss: f64, lag: u32) -> f64 {
    if sst <= 0.0 {
        return 0.0;
    }
    let mut with: Vec<u32> = base.to_vec();
    with.push(lag);
    match rss_with(rows, &with) {
        Some(rss) => ((base_rss - rss) / sst).clamp(0.0, 1.0),
        None => 0.0,
    }
}

fn check_rows(rows: &LagRows, max_lag: u32, what: &str) -> Result<()> {
    if rows.y.len() <= max_lag as usize + 5 {
        return Err(Error::Data(format!(
            "{what}: {} usable regime weeks, need more than {} (max_lag + 5)",
            rows.y.len(),
            max_lag + 5
        )));
    }
    Ok(())
}

/// Incremental R² of each lag `0..=max_lag` over an intercept-only model,
/// computed on the weeks where `mask` is true.
pub fn score_lags(
    support: &WeeklySeries,
    target: &WeeklySeries,
    mask: &dyn Fn(Week) -> bool,
    max_lag: u32,
) -> Result<Vec<(u32, f64)>> {
    let rows = lag_rows(support, target, mask, max_lag);
    check_rows(&rows, max_lag, "score_lags")?;
    Ok(marginal_scores(&rows, max_lag))
}

fn marginal_scores(rows: &LagRows, max_lag: u32) -> Vec<(u32, f64)> {
    let sst = total_ss(&rows.y);
    (0..=max_lag).map(|l| (l, incremental_r2(rows, sst, &[], sst, l))).collect()
}

fn select_regime(rows: &LagRows, max_lag: u32, threshold: f64) -> Result<RegimeLags> {
    let sst = total_ss(&rows.y);
    let marginal = marginal_scores(rows, max_lag);
    let mut retained: Vec<(u32, f64)> = Vec::new();
    let mut base_rss = sst;
    // Leave enough residual degrees of freedom for the final fit.
    let max_terms = rows.y.len().saturating_sub(3).min(max_lag as usize + 1);
    loop {
        let lags: Vec<u32> = retained.iter().map(|r| r.0).collect();
        let best = (0..=max_lag)
            .filter(|l| !lags.contains(l))
            .map(|l| (l, incremental_r2(rows, sst, &lags, base_rss, l)))
            .fold(None, |acc: Option<(u32, f64)>, c| match acc {
                Some(a) if a.1 >= c.1 => Some(a),
                _ => Some(c),
            });
        let Some((lag, score)) = best else { break };
        if retained.is_empty() || (score >= threshold && retained.len() < max_terms) {
            retained.push((lag, score));
            let lags: Vec<u32> = retained.iter().map(|r| r.0).collect();
            base_rss = rss_with(rows, &lags).unwrap_or(base_rss);
            if retained.len() == 1 && score < threshold {
                break;
            }
        } else {
            break;
        }
    }
    let lags: Vec<u32> = retained.iter().map(|r| r.0).collect();
    let n = rows.y.len();
    let x = DMatrix::from_fn(n, lags.len() + 1, |i, j| if j == 0 { 1.0 } else { rows.cols[lags[j - 1] as usize][i] });
    let beta = ols_fit(&x, &DVector::from_column_slice(&rows.y), 0.0)?;
    Ok(RegimeLags {
        terms: retained
            .iter()
            .enumerate()
            .map(|(k, &(lag, score))| LagTerm { lag, coefficient: beta[k + 1], score })
            .collect(),
        intercept: beta[0],
        marginal_scores: marginal.iter().map(|m| m.1).collect(),
        n_weeks: n,
    })
}

/// Selects lags separately for Q4 and non-Q4 weeks and fits per-regime
/// coefficients jointly on the retained lags.
pub fn select_lags(
    support: &WeeklySeries,
    target: &WeeklySeries,
    cal: &FiscalCalendar,
    max_lag: u32,
    threshold: f64,
) -> Result<LagSpec> {
    select_lags_excluding(support, target, cal, max_lag, threshold, &|_| false)
}

/// [`select_lags`] with the target weeks where `exclude` holds left out, e.g.
/// known event weeks whose spikes the support series does not explain.
pub fn select_lags_excluding(
    support: &WeeklySeries,
    target: &WeeklySeries,
    _cal: &FiscalCalendar,
    max_lag: u32,
    threshold: f64,
    exclude: &dyn Fn(Week) -> bool,
) -> Result<LagSpec> {
    if !threshold.is_finite() || threshold < 0.0 {
        return Err(Error::Validation(format!("lag threshold must be >= 0, got {threshold}")));
    }
    let non_q4_rows = lag_rows(support, target, &|w| Regime::of_week(w) == Regime::NonQ4 && !exclude(w), max_lag);
    check_rows(&non_q4_rows, max_lag, "select_lags (non-Q4)")?;
    let non_q4 = select_regime(&non_q4_rows, max_lag, threshold)?;

    let q4_rows = lag_rows(support, target, &|w| Regime::of_week(w) == Regime::Q4 && !exclude(w), max_lag);
    let q4_years: BTreeSet<i64> = q4_rows.weeks.iter().map(|w| (w - 1).div_euclid(WEEKS_PER_YEAR as i64)).collect();
    let (q4, q4_fallback) = if q4_years.len() >= 2 && q4_rows.y.len() > max_lag as usize + 5 {
        (select_regime(&q4_rows, max_lag, threshold)?, false)
    } else {
        log::warn!(
            "only {} Q4 quarter(s) with full lag history; Q4 reuses the non-Q4 lag spec",
            q4_years.len()
        );
        (non_q4.clone(), true)
    };
    Ok(LagSpec { non_q4, q4, q4_fallback, max_lag, selection_threshold: threshold })
}

/// `out[w] = Σ β·support[w − ℓ]` over the regime of `w`. Weeks without enough
/// history are dropped from the front.
pub fn apply_lags(support: &WeeklySeries, spec: &LagSpec, _cal: &FiscalCalendar) -> WeeklySeries {
    let (Some(start), Some(end)) = (support.start(), support.end()) else {
        return WeeklySeries::empty();
    };
    let first = start + spec.largest_selected_lag() as i64;
    if first > end {
        return WeeklySeries::empty();
    }
    let values = (first..=end)
        .map(|w| {
            spec.regime(Regime::of_week(w))
                .terms
                .iter()
                .map(|t| t.coefficient * support.get(w - t.lag as i64).unwrap_or(0.0))
                .sum()
        })
        .collect();
    WeeklySeries::new(first, values)
}

/// Minimizes `‖y − Xβ‖² + λ Σ_j (1 + γ·lag_j) β_j²`.
pub fn lag_weighted_fit(x: &DMatrix<f64>, lags: &[u32], y: &DVector<f64>, lambda: f64, gamma: f64) -> Result<DVector<f64>> {
    if !(lambda >= 0.0 && gamma >= 0.0) || !lambda.is_finite() || !gamma.is_finite() {
        return Err(Error::Validation(format!("lambda and gamma must be >= 0, got {lambda}, {gamma}")));
    }
    if lags.len() != x.ncols() {
        return Err(Error::Validation(format!("{} lag labels for {} columns", lags.len(), x.ncols())));
    }
    let penalties: Vec<f64> = lags.iter().map(|&l| lambda * (1.0 + gamma * l as f64)).collect();
    penalized_lstsq(x, y, &penalties, None)
}

/// Pearson correlation over the weeks both series cover.
pub fn aligned_correlation(a: &WeeklySeries, b: &WeeklySeries) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = a.iter().filter_map(|(w, v)| b.get(w).map(|u| (v, u))).unzip();
    pearson(&xs, &ys)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
