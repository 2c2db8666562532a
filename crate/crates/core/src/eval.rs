//! Forecast accuracy metrics and fold construction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calendar::Week;
use crate::error::{Error, Result};
use crate::invoice::{Invoice, Segment};
use crate::profiles::median;
use crate::series::WeeklySeries;

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// `100 · mean(|a − p| / |a|)` over two series covering the same weeks.
pub fn mape(actual: &WeeklySeries, predicted: &WeeklySeries) -> Result<f64> {
    if actual.start() != predicted.start() || actual.len() != predicted.len() {
        return Err(Error::Validation(format!(
            "mape needs aligned series, got {:?}+{} and {:?}+{}",
            actual.start(),
            actual.len(),
            predicted.start(),
            predicted.len()
        )));
    }
    mape_values(actual.values(), predicted.values())
}

pub fn mape_values(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() || actual.is_empty() {
        return Err(Error::Validation(format!(
            "mape needs equal nonempty lengths, got {} and {}",
            actual.len(),
            predicted.len()
        )));
    }
    let mut total = 0.0;
    for (i, (&a, &p)) in actual.iter().zip(predicted).enumerate() {
        if a == 0.0 {
            return Err(Error::Metric(format!("actual value at position {i} is zero")));
        }
        total += (a - p).abs() / a.abs();
    }
    Ok(100.0 * total / actual.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: Week,
    pub end: Week,
}

impl Span {
    pub fn new(start: Week, end: Week) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        (self.end - self.start + 1).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn weeks(&self) -> Vec<Week> {
        (self.start..=self.end).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: Span,
    pub test: Span,
    pub weight: f64,
}

/// `v_f = f / Σ f` for `f = 1..=n`: most recent fold heaviest.
pub fn default_fold_weights(n: usize) -> Vec<f64> {
    let total = (n * (n + 1) / 2) as f64;
    (1..=n).map(|f| f as f64 / total).collect()
}

/// `n_folds` expanding-train folds over `span`, each testing the next
/// `horizon` weeks; the last fold's test ends at `span.end`.
pub fn sliding_folds(span: Span, n_folds: usize, horizon: usize, min_train: usize) -> Result<Vec<Fold>> {
    if n_folds == 0 || horizon == 0 {
        return Err(Error::Validation("need at least one fold and a positive horizon".into()));
    }
    let needed = n_folds * horizon + min_train.max(1);
    if span.len() < needed {
        return Err(Error::Data(format!(
            "series of {} weeks is too short for {n_folds} folds of {horizon} weeks plus {} training weeks",
            span.len(),
            min_train.max(1)
        )));
    }
    let weights = default_fold_weights(n_folds);
    Ok((0..n_folds)
        .map(|f| {
            let test_end = span.end - ((n_folds - 1 - f) * horizon) as i64;
            let test_start = test_end - horizon as i64 + 1;
            Fold {
                index: f + 1,
                train: Span::new(span.start, test_start - 1),
                test: Span::new(test_start, test_end),
                weight: weights[f],
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub fold_index: usize,
    pub mape: f64,
    pub weight: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Validation(format!("alpha must be in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// `α · Σ v_f MAPE_f + (1 − α) · sqrt(Σ v_f (MAPE_f − mean)²)` with the
/// weighted mean.
pub fn variance_weighted_score(folds: &[FoldScore], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if folds.is_empty() {
        return Err(Error::Validation("no fold scores".into()));
    }
    if folds.iter().any(|f| !(f.weight > 0.0)) {
        return Err(Error::Validation("fold weights must be positive".into()));
    }
    let total: f64 = folds.iter().map(|f| f.weight).sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::Validation(format!("fold weights sum to {total}, expected 1")));
    }
    let mean: f64 = folds.iter().map(|f| f.weight * f.mape).sum();
    let var: f64 = folds.iter().map(|f| f.weight * (f.mape - mean).powi(2)).sum();
    Ok(alpha * mean + (1.0 - alpha) * var.sqrt())
}

pub fn final_score(window_scores: &[f64]) -> Result<f64> {
    if window_scores.is_empty() {
        return Err(Error::Validation("final score needs at least one window".into()));
    }
    Ok(window_scores.iter().sum::<f64>() / window_scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub weights: Vec<f64>,
    pub alpha: f64,
}

impl LossWeights {
    pub fn validate(&self, k: usize) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.weights.len() != k || k == 0 {
            return Err(Error::Validation(format!("{} loss weights for {k} errors", self.weights.len())));
        }
        if self.weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Validation("loss weights must be positive".into()));
        }
        Ok(())
    }
}

/// `L = α·Ē_w + (1 − α)·σ_w`, `Ē_w = Σ w e / Σ w`,
/// `σ_w = sqrt(Σ w (e − Ē_w)² / Σ w)`.
pub fn custom_loss(errors: &[f64], weights: &LossWeights) -> Result<f64> {
    weights.validate(errors.len())?;
    let total: f64 = weights.weights.iter().sum();
    let mean = errors.iter().zip(&weights.weights).map(|(e, w)| w * e).sum::<f64>() / total;
    let var = errors.iter().zip(&weights.weights).map(|(e, w)| w * (e - mean).powi(2)).sum::<f64>() / total;
    Ok(weights.alpha * mean + (1.0 - weights.alpha) * var.sqrt())
}

/// `(baseline − proposed) / baseline · 100`.
pub fn accuracy_uplift(error_baseline: f64, error_proposed: f64) -> Result<f64> {
    if !(error_baseline > 0.0) {
        return Err(Error::Validation(format!("baseline error must be > 0, got {error_baseline}")));
    }
    Ok((error_baseline - error_proposed) / error_baseline * 100.0)
}

/// Payment date minus due date, in days.
pub fn payment_deviation(invoice: &Invoice) -> Result<i64> {
    invoice
        .payment_date
        .map(|p| (p - invoice.due_date).num_days())
        .ok_or_else(|| Error::MissingData(format!("invoice {} is open", invoice.invoice_id)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationSummary {
    pub n: usize,
    pub mean_days: f64,
    pub mean_abs_days: f64,
    pub median_days: f64,
    pub min_days: i64,
    pub max_days: i64,
    /// Share of invoices paid after the due date.
    pub late_share: f64,
}

/// Δt statistics per segment over closed invoices.
pub fn deviation_summary(invoices: &[Invoice]) -> BTreeMap<Segment, DeviationSummary> {
    let mut by_seg: BTreeMap<Segment, Vec<i64>> = BTreeMap::new();
    for inv in invoices {
        if let Ok(d) = payment_deviation(inv) {
            by_seg.entry(inv.segment).or_default().push(d);
        }
    }
    by_seg
        .into_iter()
        .map(|(seg, d)| {
            let n = d.len() as f64;
            let mut f: Vec<f64> = d.iter().map(|&x| x as f64).collect();
            (
                seg,
                DeviationSummary {
                    n: d.len(),
                    mean_days: f.iter().sum::<f64>() / n,
                    mean_abs_days: f.iter().map(|x| x.abs()).sum::<f64>() / n,
                    median_days: median(&mut f),
                    min_days: *d.iter().min().unwrap(),
                    max_days: *d.iter().max().unwrap(),
                    late_share: d.iter().filter(|&&x| x > 0).count() as f64 / n,
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn folds(mapes: &[f64], w: &[f64]) -> Vec<FoldScore> {
        mapes
            .iter()
            .zip(w)
            .enumerate()
            .map(|(i, (&m, &v))| FoldScore { fold_index: i + 1, mape: m, weight: v })
            .collect()
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape_values(&[100.0], &[90.0]).unwrap(), 10.0);
        assert!((mape_values(&[100.0, 200.0], &[110.0, 180.0]).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(mape_values(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert!(matches!(mape_values(&[0.0], &[1.0]), Err(Error::Metric(_))));
    }

    #[test]
    fn score_examples() {
        let w = default_fold_weights(3);
        assert!((variance_weighted_score(&folds(&[10.0; 3], &w), 0.7).unwrap() - 7.0).abs() < 1e-12);
        let eq = [1.0 / 3.0; 3];
        assert!((variance_weighted_score(&folds(&[10.0, 20.0, 30.0], &eq), 1.0).unwrap() - 20.0).abs() < 1e-12);
        let bad = [0.5, 0.5, 0.5];
        assert!(variance_weighted_score(&folds(&[1.0, 2.0, 3.0], &bad), 0.5).is_err());
    }

    #[test]
    fn fold_construction() {
        let f = sliding_folds(Span::new(1, 52), 3, 13, 13).unwrap();
        assert_eq!(f[0].test, Span::new(14, 26));
        assert_eq!(f[1].test, Span::new(27, 39));
        assert_eq!(f[2].test, Span::new(40, 52));
        for fold in &f {
            assert!(fold.train.end < fold.test.start);
        }
        let w: Vec<f64> = f.iter().map(|x| x.weight).collect();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(w.windows(2).all(|p| p[0] < p[1]));
        assert!(matches!(sliding_folds(Span::new(1, 40), 3, 13, 13), Err(Error::Data(_))));
    }

    #[test]
    fn final_and_uplift() {
        assert_eq!(final_score(&[12.0]).unwrap(), 12.0);
        assert_eq!(final_score(&[10.0, 20.0]).unwrap(), 15.0);
        assert!(final_score(&[]).is_err());
        assert!((accuracy_uplift(20.0, 19.0).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(accuracy_uplift(7.0, 0.0).unwrap(), 100.0);
        assert!(accuracy_uplift(0.0, 1.0).is_err());
    }

    #[test]
    fn loss_examples() {
        let lw = |w: &[f64], a: f64| LossWeights { weights: w.to_vec(), alpha: a };
        assert!((custom_loss(&[5.0; 3], &lw(&[1.0, 3.0, 2.0], 0.4)).unwrap() - 2.0).abs() < 1e-12);
        assert!((custom_loss(&[10.0, 20.0], &lw(&[1.0, 1.0], 0.0)).unwrap() - 5.0).abs() < 1e-12);
        assert!(custom_loss(&[1.0], &lw(&[0.0], 0.5)).is_err());
        assert!(custom_loss(&[1.0], &lw(&[1.0], 1.5)).is_err());
    }
}
