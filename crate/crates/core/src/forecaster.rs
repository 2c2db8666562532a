//! Additive weekly model: piecewise-linear trend, Fourier seasonal blocks,
//! standardized external regressors and 0/1 event indicators, fitted by
//! group-penalized least squares.
//!
//! Design column order:
//! `[1, t, max(0, t − c_1) .. max(0, t − c_J), per block (sin k, cos k) for
//! k = 1..K, standardized regressors (sorted by name), events (sorted by name)]`
//! where `t` is the absolute week number.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calendar::Week;
use crate::error::{Error, Result};
use crate::linalg::penalized_lstsq;
use crate::series::WeeklySeries;

pub type Regressors = BTreeMap<String, WeeklySeries>;
pub type Events = BTreeMap<String, BTreeSet<Week>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeasonalBlock {
    pub name: String,
    pub period_weeks: f64,
    pub fourier_order: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeasonalityConfig {
    pub blocks: Vec<SeasonalBlock>,
}

impl SeasonalityConfig {
    pub fn none() -> Self {
        SeasonalityConfig { blocks: Vec::new() }
    }

    /// Quarterly (13 weeks) and yearly (52 weeks) blocks. A weekly block has
    /// no meaning at weekly granularity and is left out.
    pub fn quarterly_yearly(k_q: u32, k_y: u32) -> Self {
        let mut blocks = Vec::new();
        if k_q > 0 {
            blocks.push(SeasonalBlock { name: "quarterly".into(), period_weeks: 13.0, fourier_order: k_q });
        }
        if k_y > 0 {
            blocks.push(SeasonalBlock { name: "yearly".into(), period_weeks: 52.0, fourier_order: k_y });
        }
        SeasonalityConfig { blocks }
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for b in &self.blocks {
            if b.fourier_order < 1 || !(b.period_weeks > 0.0) || !b.period_weeks.is_finite() {
                return Err(Error::Validation(format!(
                    "seasonal block {}: need fourier_order >= 1 and period > 0",
                    b.name
                )));
            }
            if !names.insert(&b.name) {
                return Err(Error::Validation(format!("duplicate seasonal block {}", b.name)));
            }
        }
        Ok(())
    }
}

impl Default for SeasonalityConfig {
    fn default() -> Self {
        SeasonalityConfig::quarterly_yearly(2, 3)
    }
}

/// Ridge strength per column group. Intercept and base slope are never
/// penalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupRidges {
    pub changepoint: f64,
    pub seasonal: f64,
    pub regressor: f64,
    pub event: f64,
}

impl GroupRidges {
    pub const ZERO: GroupRidges = GroupRidges { changepoint: 0.0, seasonal: 0.0, regressor: 0.0, event: 0.0 };
}

impl Default for GroupRidges {
    fn default() -> Self {
        GroupRidges { changepoint: 10.0, seasonal: 1.0, regressor: 1.0, event: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecasterConfig {
    pub seasonality: SeasonalityConfig,
    pub n_changepoints: u32,
    /// Fraction of the history over which changepoints are spread.
    pub changepoint_range: f64,
    pub ridge: GroupRidges,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        ForecasterConfig {
            seasonality: SeasonalityConfig::default(),
            n_changepoints: 8,
            changepoint_range: 0.8,
            ridge: GroupRidges::default(),
        }
    }
}

impl ForecasterConfig {
    pub fn trend_only() -> Self {
        ForecasterConfig {
            seasonality: SeasonalityConfig::none(),
            n_changepoints: 0,
            changepoint_range: 0.8,
            ridge: GroupRidges::ZERO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.seasonality.validate()?;
        if !(self.changepoint_range > 0.0 && self.changepoint_range <= 1.0) {
            return Err(Error::Validation(format!(
                "changepoint_range must be in (0, 1], got {}",
                self.changepoint_range
            )));
        }
        let r = self.ridge;
        if [r.changepoint, r.seasonal, r.regressor, r.event].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Validation("ridge strengths must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub scale: f64,
}

/// Everything needed to rebuild design rows for arbitrary weeks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub changepoints: Vec<f64>,
    pub seasonality: SeasonalityConfig,
    pub regressors: Vec<(String, Standardization)>,
    pub events: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnGroup {
    Intercept,
    Slope,
    Changepoint,
    Seasonal,
    Regressor,
    Event,
}

impl DesignSpec {
    /// Changepoints over the first `range` fraction of `weeks`, standardization
    /// from the regressor values on `weeks`.
    pub fn for_training(
        weeks: &[Week],
        config: &ForecasterConfig,
        regressors: &Regressors,
        events: &Events,
    ) -> Result<DesignSpec> {
        let regressors = regressors
            .iter()
            .map(|(name, s)| {
                let v = aligned(name, s, weeks)?;
                let n = v.len().max(1) as f64;
                let mean = v.iter().sum::<f64>() / n;
                let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
                let scale = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
                Ok((name.clone(), Standardization { mean, scale }))
            })
            .collect::<Result<_>>()?;
        Ok(DesignSpec {
            changepoints: changepoints(weeks, config.n_changepoints, config.changepoint_range),
            seasonality: config.seasonality.clone(),
            regressors,
            events: events.keys().cloned().collect(),
        })
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec!["intercept".to_string(), "t".to_string()];
        names.extend(self.changepoints.iter().map(|c| format!("changepoint@{c}")));
        for b in &self.seasonality.blocks {
            for k in 1..=b.fourier_order {
                names.push(format!("{}_sin{k}", b.name));
                names.push(format!("{}_cos{k}", b.name));
            }
        }
        names.extend(self.regressors.iter().map(|r| format!("regressor:{}", r.0)));
        names.extend(self.events.iter().map(|e| format!("event:{e}")));
        names
    }

    pub fn column_groups(&self) -> Vec<ColumnGroup> {
        let mut g = vec![ColumnGroup::Intercept, ColumnGroup::Slope];
        g.extend(self.changepoints.iter().map(|_| ColumnGroup::Changepoint));
        let n_seasonal: u32 = self.seasonality.blocks.iter().map(|b| 2 * b.fourier_order).sum();
        g.extend((0..n_seasonal).map(|_| ColumnGroup::Seasonal));
        g.extend(self.regressors.iter().map(|_| ColumnGroup::Regressor));
        g.extend(self.events.iter().map(|_| ColumnGroup::Event));
        g
    }

    pub fn n_columns(&self) -> usize {
        self.column_groups().len()
    }

    pub fn matrix(&self, weeks: &[Week], regressors: &Regressors, events: &Events) -> Result<DMatrix<f64>> {
        let reg_values: Vec<(Vec<f64>, Standardization)> = self
            .regressors
            .iter()
            .map(|(name, st)| {
                let s = regressors
                    .get(name)
                    .ok_or_else(|| Error::Data(format!("regressor {name} not supplied")))?;
                Ok((aligned(name, s, weeks)?, *st))
            })
            .collect::<Result<_>>()?;
        let empty = BTreeSet::new();
        let event_sets: Vec<&BTreeSet<Week>> = self.events.iter().map(|e| events.get(e).unwrap_or(&empty)).collect();
        let p = self.n_columns();
        let mut x = DMatrix::zeros(weeks.len(), p);
        for (i, &w) in weeks.iter().enumerate() {
            let t = w as f64;
            let mut j = 0;
            let mut put = |v: f64| {
                x[(i, j)] = v;
                j += 1;
            };
            put(1.0);
            put(t);
            for &c in &self.changepoints {
                put((t - c).max(0.0));
            }
            for b in &self.seasonality.blocks {
                for k in 1..=b.fourier_order {
                    let arg = 2.0 * PI * k as f64 * t / b.period_weeks;
                    put(arg.sin());
                    put(arg.cos());
                }
            }
            for (vals, st) in &reg_values {
                put((vals[i] - st.mean) / st.scale);
            }
            for set in &event_sets {
                put(if set.contains(&w) { 1.0 } else { 0.0 });
            }
        }
        Ok(x)
    }
}

fn aligned(name: &str, s: &WeeklySeries, weeks: &[Week]) -> Result<Vec<f64>> {
    s.values_at(weeks).map_err(|missing| {
        Error::Data(format!(
            "regressor {name} has no values for weeks {}",
            compact_weeks(&missing)
        ))
    })
}

fn compact_weeks(weeks: &[Week]) -> String {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < weeks.len() {
        let mut j = i;
        while j + 1 < weeks.len() && weeks[j + 1] == weeks[j] + 1 {
            j += 1;
        }
        parts.push(if i == j { weeks[i].to_string() } else { format!("{}-{}", weeks[i], weeks[j]) });
        i = j + 1;
    }
    parts.join(",")
}

/// `n` changepoints at rounded, evenly spaced positions inside the first
/// `range` fraction of `weeks` (the first week itself excluded).
pub fn changepoints(weeks: &[Week], n: u32, range: f64) -> Vec<f64> {
    if n == 0 || weeks.len() < 3 {
        return Vec::new();
    }
    let m = ((weeks.len() as f64 * range).floor() as usize).clamp(2, weeks.len());
    let mut out: Vec<f64> = (1..=n as usize)
        .map(|j| weeks[((j * (m - 1)) as f64 / n as f64).round() as usize] as f64)
        .filter(|&c| c > weeks[0] as f64)
        .collect();
    out.dedup();
    out
}

/// Column layout for the given weeks with changepoints and standardization
/// derived from those weeks.
pub fn design_matrix(
    weeks: &[Week],
    config: &ForecasterConfig,
    regressors: &Regressors,
    events: &Events,
) -> Result<DMatrix<f64>> {
    DesignSpec::for_training(weeks, config, regressors, events)?.matrix(weeks, regressors, events)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveModel {
    pub spec: DesignSpec,
    pub ridge: GroupRidges,
    pub column_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub fit_start: Week,
    pub fit_end: Week,
}

pub fn fit(series: &WeeklySeries, config: &ForecasterConfig, regressors: &Regressors, events: &Events) -> Result<AdditiveModel> {
    config.validate()?;
    let weeks: Vec<Week> = series.weeks().collect();
    if weeks.is_empty() {
        return Err(Error::Data("cannot fit an empty series".into()));
    }
    if series.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite value in training series".into()));
    }
    let spec = DesignSpec::for_training(&weeks, config, regressors, events)?;
    let x = spec.matrix(&weeks, regressors, events)?;
    let r = config.ridge;
    let penalties: Vec<f64> = spec
        .column_groups()
        .iter()
        .map(|g| match g {
            ColumnGroup::Intercept | ColumnGroup::Slope => 0.0,
            ColumnGroup::Changepoint => r.changepoint,
            ColumnGroup::Seasonal => r.seasonal,
            ColumnGroup::Regressor => r.regressor,
            ColumnGroup::Event => r.event,
        })
        .collect();
    let names = spec.column_names();
    let beta = penalized_lstsq(&x, &DVector::from_column_slice(series.values()), &penalties, Some(&names))?;
    Ok(AdditiveModel {
        spec,
        ridge: r,
        column_names: names,
        coefficients: beta.iter().copied().collect(),
        fit_start: weeks[0],
        fit_end: *weeks.last().unwrap(),
    })
}

impl AdditiveModel {
    pub fn coefficient(&self, column: &str) -> Option<f64> {
        self.column_names.iter().position(|c| c == column).map(|i| self.coefficients[i])
    }

    /// Effect of one unit of the raw regressor.
    pub fn regressor_effect(&self, name: &str) -> Option<f64> {
        let st = self.spec.regressors.iter().find(|r| r.0 == name)?.1;
        Some(self.coefficient(&format!("regressor:{name}"))? / st.scale)
    }

    pub fn predict_weeks(&self, weeks: &[Week], regressors: &Regressors, events: &Events) -> Result<Vec<f64>> {
        let x = self.spec.matrix(weeks, regressors, events)?;
        let beta = DVector::from_column_slice(&self.coefficients);
        Ok((x * beta).iter().copied().collect())
    }
}

/// Forecast over `weeks` (consecutive). Regressors must cover every week.
pub fn predict(model: &AdditiveModel, weeks: &[Week], regressors: &Regressors, events: &Events) -> Result<WeeklySeries> {
    let Some(&first) = weeks.first() else {
        return Ok(WeeklySeries::empty());
    };
    if weeks.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::Validation("forecast weeks must be consecutive".into()));
    }
    Ok(WeeklySeries::new(first, model.predict_weeks(weeks, regressors, events)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Trend,
    Seasonal,
    Regressor,
    Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    pub kind: ComponentKind,
    pub values: Vec<f64>,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub weeks: Vec<Week>,
    pub prediction: Vec<f64>,
    pub components: Vec<Component>,
}

impl Decomposition {
    pub fn share(&self, name: &str) -> Option<f64> {
        self.components.iter().find(|c| c.name == name).map(|c| c.share)
    }

    pub fn kind_share(&self, kind: ComponentKind) -> f64 {
        self.components.iter().filter(|c| c.kind == kind).map(|c| c.share).sum()
    }

    pub fn max_identity_error(&self) -> f64 {
        (0..self.weeks.len())
            .map(|i| {
                let sum: f64 = self.components.iter().map(|c| c.values[i]).sum();
                (sum - self.prediction[i]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Splits predictions into trend, one series per seasonal block, regressor
/// and event. Regressor components are in original units, `effect · x`; the
/// standardization offsets are folded into the trend.
pub fn decompose(model: &AdditiveModel, weeks: &[Week], regressors: &Regressors, events: &Events) -> Result<Decomposition> {
    let x = model.spec.matrix(weeks, regressors, events)?;
    let beta = &model.coefficients;
    let n = weeks.len();
    let col = |j: usize| -> Vec<f64> { (0..n).map(|i| x[(i, j)] * beta[j]).collect() };
    let add = |a: &mut Vec<f64>, b: Vec<f64>| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);

    let mut components = Vec::new();
    let n_trend = 2 + model.spec.changepoints.len();
    let mut trend = vec![0.0; n];
    for j in 0..n_trend {
        add(&mut trend, col(j));
    }
    let mut j = n_trend;
    let mut seasonal = Vec::new();
    for b in &model.spec.seasonality.blocks {
        let mut s = vec![0.0; n];
        for _ in 0..2 * b.fourier_order {
            add(&mut s, col(j));
            j += 1;
        }
        seasonal.push((b.name.clone(), s));
    }
    let mut regs = Vec::new();
    for (name, st) in &model.spec.regressors {
        let standardized = col(j);
        let offset = beta[j] * st.mean / st.scale;
        trend.iter_mut().for_each(|t| *t -= offset);
        regs.push((name.clone(), standardized.into_iter().map(|v| v + offset).collect::<Vec<f64>>()));
        j += 1;
    }
    let mut evs = Vec::new();
    for name in &model.spec.events {
        evs.push((name.clone(), col(j)));
        j += 1;
    }
    components.push(("trend".to_string(), ComponentKind::Trend, trend));
    components.extend(seasonal.into_iter().map(|(nm, v)| (nm, ComponentKind::Seasonal, v)));
    components.extend(regs.into_iter().map(|(nm, v)| (nm, ComponentKind::Regressor, v)));
    components.extend(evs.into_iter().map(|(nm, v)| (nm, ComponentKind::Event, v)));

    let prediction: Vec<f64> = (x * DVector::from_column_slice(beta)).iter().copied().collect();
    let mean_abs: Vec<f64> = components
        .iter()
        .map(|c| if n == 0 { 0.0 } else { c.2.iter().map(|v| v.abs()).sum::<f64>() / n as f64 })
        .collect();
    let total: f64 = mean_abs.iter().sum();
    Ok(Decomposition {
        weeks: weeks.to_vec(),
        prediction,
        components: components
            .into_iter()
            .zip(mean_abs)
            .map(|((name, kind, values), m)| Component {
                name,
                kind,
                values,
                share: if total > 0.0 { m / total } else { 0.0 },
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weeks(a: Week, b: Week) -> Vec<Week> {
        (a..=b).collect()
    }

    #[test]
    fn trend_only_columns() {
        let x = design_matrix(&weeks(1, 10), &ForecasterConfig::trend_only(), &Regressors::new(), &Events::new()).unwrap();
        assert_eq!(x.ncols(), 2);
        assert_eq!(x[(3, 1)], 4.0);
    }

    #[test]
    fn fourier_columns_and_phase() {
        let mut cfg = ForecasterConfig::trend_only();
        cfg.seasonality.blocks.push(SeasonalBlock { name: "q".into(), period_weeks: 13.0, fourier_order: 2 });
        let x = design_matrix(&weeks(1, 26), &cfg, &Regressors::new(), &Events::new()).unwrap();
        assert_eq!(x.ncols(), 6);
        let row = 12; // t = 13
        assert!(x[(row, 2)].abs() < 1e-12 && (x[(row, 3)] - 1.0).abs() < 1e-12);
        assert!(x[(row, 4)].abs() < 1e-12 && (x[(row, 5)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn changepoints_inside_first_eighty_percent() {
        let w = weeks(1, 100);
        let cps = changepoints(&w, 8, 0.8);
        assert_eq!(cps.len(), 8);
        assert!(cps.iter().all(|&c| c > 1.0 && c <= 80.0));
        assert!(cps.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn constant_series() {
        let s = WeeklySeries::constant(1, 30, 5.0);
        let m = fit(&s, &ForecasterConfig::trend_only(), &Regressors::new(), &Events::new()).unwrap();
        assert!((m.coefficients[0] - 5.0).abs() < 1e-8);
        assert!(m.coefficients[1].abs() < 1e-8);
        let f = predict(&m, &weeks(31, 40), &Regressors::new(), &Events::new()).unwrap();
        assert!(f.values().iter().all(|v| (v - 5.0).abs() < 1e-8));
    }

    #[test]
    fn pure_slope_extrapolates() {
        let s = WeeklySeries::new(1, (1..=20).map(|t| t as f64).collect());
        let m = fit(&s, &ForecasterConfig::trend_only(), &Regressors::new(), &Events::new()).unwrap();
        let f = predict(&m, &weeks(21, 25), &Regressors::new(), &Events::new()).unwrap();
        for (w, v) in f.iter() {
            assert!((v - w as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn regressor_destandardized() {
        let x: Vec<f64> = (0..40).map(|i| ((i * 37) % 11) as f64 + 0.5 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 10.0).collect();
        let mut regs = Regressors::new();
        regs.insert("x".into(), WeeklySeries::new(1, x));
        let m = fit(&WeeklySeries::new(1, y), &ForecasterConfig::trend_only(), &regs, &Events::new()).unwrap();
        assert!((m.regressor_effect("x").unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn missing_future_regressor_lists_weeks() {
        let mut regs = Regressors::new();
        regs.insert("x".into(), WeeklySeries::new(1, (0..20).map(|v| ((v * 7) % 5) as f64).collect()));
        let y = WeeklySeries::new(1, (0..20).map(|v| v as f64).collect());
        let m = fit(&y, &ForecasterConfig::trend_only(), &regs, &Events::new()).unwrap();
        let err = predict(&m, &weeks(19, 24), &regs, &Events::new()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        assert!(err.to_string().contains("21-24"), "{err}");
    }

    #[test]
    fn trend_only_share_is_one() {
        let s = WeeklySeries::new(1, (1..=20).map(|t| 3.0 + t as f64).collect());
        let m = fit(&s, &ForecasterConfig::trend_only(), &Regressors::new(), &Events::new()).unwrap();
        let d = decompose(&m, &weeks(1, 20), &Regressors::new(), &Events::new()).unwrap();
        assert_eq!(d.components.len(), 1);
        assert!((d.share("trend").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn events_get_their_own_coefficient() {
        let mut ev = Events::new();
        ev.insert("promo".into(), [5, 18].into_iter().collect());
        let y = WeeklySeries::new(1, (1..=30).map(|w| 10.0 + if w == 5 || w == 18 { 7.0 } else { 0.0 }).collect());
        let m = fit(&y, &ForecasterConfig::trend_only(), &Regressors::new(), &ev).unwrap();
        assert!((m.coefficient("event:promo").unwrap() - 7.0).abs() < 1e-8);
    }
}
