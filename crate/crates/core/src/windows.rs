//! Rolling-window collection series that combine realized payments with the
//! predicted closures of invoices still open at an anchor week.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calendar::{FiscalCalendar, Week};
use crate::closure::ClosurePredictor;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::invoice::Invoice;
use crate::money::Money;
use crate::profiles::ProfileBook;
use crate::series::{aggregate_cents, WeeklySeries};

pub const DEFAULT_SHORT_WINDOW: u32 = 4;
pub const DEFAULT_LONG_WINDOW: u32 = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Realized,
    Predicted,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedRegressor {
    pub window_len_weeks: u32,
    pub anchor_week: Week,
    pub series: WeeklySeries,
    /// One entry per week of `series`.
    pub provenance: Vec<Provenance>,
}

impl WindowedRegressor {
    pub fn provenance_at(&self, week: Week) -> Option<Provenance> {
        let start = self.series.start()?;
        self.provenance.get(usize::try_from(week - start).ok()?).copied()
    }
}

/// Weekly collections over `[first week, anchor + window_len]`: realized
/// payments of closed invoices plus open invoices placed at their predicted
/// closure week. Predictions at or before the anchor (already overdue) are
/// moved to `anchor + 1`; predictions past the span end are dropped.
///
/// The caller decides what is visible: pass data censored at the anchor.
pub fn simulate_partial(
    invoices: &[Invoice],
    predictor: &dyn ClosurePredictor,
    book: &ProfileBook,
    anchor_week: Week,
    window_len: u32,
    cal: &FiscalCalendar,
) -> Result<WindowedRegressor> {
    let first = data_start_week(invoices, cal)?;
    if anchor_week < first {
        return Err(Error::Range(format!("anchor week {anchor_week} is before the first data week {first}")));
    }
    let end = anchor_week + window_len as i64;
    cal.check_week(end)?;
    let mut realized = Vec::new();
    for inv in invoices {
        if let Some(p) = inv.payment_date {
            let w = cal.week_index(p)?;
            if w <= end {
                realized.push((w, inv.amount));
            }
        }
    }
    let predicted = predicted_closures(invoices.iter().filter(|i| !i.is_closed()), predictor, book, anchor_week, end, cal)?;
    let realized = aggregate_cents(realized);
    let predicted = aggregate_cents(predicted);
    let start = first.min(realized.keys().next().copied().unwrap_or(first));
    let mut values = Vec::with_capacity((end - start + 1) as usize);
    let mut provenance = Vec::with_capacity(values.capacity());
    for w in start..=end {
        let r = realized.get(&w).copied();
        let p = predicted.get(&w).copied();
        values.push((r.unwrap_or_default() + p.unwrap_or_default()).to_f64());
        provenance.push(match (r, p) {
            (_, None) => Provenance::Realized,
            (None, Some(_)) => Provenance::Predicted,
            (Some(_), Some(_)) => Provenance::Mixed,
        });
    }
    Ok(WindowedRegressor {
        window_len_weeks: window_len,
        anchor_week,
        series: WeeklySeries::new(start, values),
        provenance,
    })
}

fn data_start_week(invoices: &[Invoice], cal: &FiscalCalendar) -> Result<Week> {
    let first = invoices
        .iter()
        .map(|i| i.payment_date.map_or(i.issue_date, |p| p.min(i.issue_date)))
        .min()
        .ok_or_else(|| Error::MissingData("no invoices to simulate".into()))?;
    cal.week_index(first)
}

/// `(week, amount)` of each open invoice at its predicted closure week,
/// clamped to `anchor + 1` and dropped past `end`.
fn predicted_closures<'a>(
    open: impl Iterator<Item = &'a Invoice>,
    predictor: &dyn ClosurePredictor,
    book: &ProfileBook,
    anchor_week: Week,
    end: Week,
    cal: &FiscalCalendar,
) -> Result<Vec<(Week, Money)>> {
    let mut out = Vec::new();
    for inv in open {
        let profile = book.profile_at(&inv.customer_id, inv.segment, inv.issue_date);
        let date = predictor.predict_close_date(inv, &profile, cal)?;
        let w = match cal.week_index(date) {
            Ok(w) => w.max(anchor_week + 1),
            Err(_) => continue,
        };
        if w <= end {
            out.push((w, inv.amount));
        }
    }
    Ok(out)
}

/// `[anchor, anchor − L, anchor − 2L, ...]`, at most `n_windows` entries and
/// none before `data_start`.
pub fn rollback_anchors(anchor_week: Week, window_len: u32, n_windows: usize, data_start: Week) -> Vec<Week> {
    let step = window_len.max(1) as i64;
    (0i64..)
        .take(n_windows)
        .map(|k| anchor_week - k * step)
        .take_while(|&a| a >= data_start)
        .collect()
}

/// Short and long regressors at the dataset's latest observed week.
pub fn build_regressors(
    dataset: &Dataset,
    predictor: &dyn ClosurePredictor,
    book: &ProfileBook,
    cal: &FiscalCalendar,
    short_len: u32,
    long_len: u32,
) -> Result<(WindowedRegressor, WindowedRegressor)> {
    let anchor = dataset.last_observed_week(cal)?;
    let visible = dataset.censor(anchor, cal)?;
    Ok((
        simulate_partial(&visible.invoices, predictor, book, anchor, short_len, cal)?,
        simulate_partial(&visible.invoices, predictor, book, anchor, long_len, cal)?,
    ))
}

/// Regressor history built by walking back from `origin` in blocks of
/// `window_len`. Week `w` in block `(A, A + L]` carries the predicted closures
/// of invoices open at the end of anchor week `A`, so every training week sees
/// the same kind of partial information the forecast block sees at `origin`.
/// Covers `(earliest anchor, origin + L]`.
pub fn historical_regressor(
    invoices: &[Invoice],
    predictor: &dyn ClosurePredictor,
    book: &ProfileBook,
    origin: Week,
    window_len: u32,
    data_start: Week,
    cal: &FiscalCalendar,
) -> Result<WeeklySeries> {
    if window_len == 0 {
        return Err(Error::Validation("window length must be >= 1".into()));
    }
    let anchors = rollback_anchors(origin, window_len, usize::MAX, data_start);
    let Some(&earliest) = anchors.last() else {
        return Err(Error::Range(format!("origin {origin} is before data start {data_start}")));
    };
    let mut blocks: BTreeMap<Week, Money> = BTreeMap::new();
    for &anchor in &anchors {
        let cutoff = cal.last_date_of(anchor)?;
        let end = anchor + window_len as i64;
        let open = invoices
            .iter()
            .filter(|i| i.issue_date <= cutoff && i.payment_date.is_none_or(|p| p > cutoff));
        for w in anchor + 1..=end {
            blocks.entry(w).or_default();
        }
        for (w, m) in predicted_closures(open, predictor, book, anchor, end, cal)? {
            *blocks.entry(w).or_default() += m;
        }
    }
    let values = (earliest + 1..=origin + window_len as i64)
        .map(|w| blocks.get(&w).copied().unwrap_or_default().to_f64())
        .collect();
    Ok(WeeklySeries::new(earliest + 1, values))
}
