//! Gapless weekly series and weekly aggregation of dated amounts.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::calendar::{FiscalCalendar, Week};
use crate::error::{Error, Result};
use crate::money::Money;

/// Ordered `(absolute_week, value)` pairs with no gaps.
///
/// Stored densely as a start week plus values; an empty series has no span.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WeeklySeries {
    start: Week,
    values: Vec<f64>,
}

impl WeeklySeries {
    pub fn empty() -> Self {
        WeeklySeries::default()
    }

    pub fn new(start: Week, values: Vec<f64>) -> Self {
        WeeklySeries { start, values }
    }

    pub fn constant(start: Week, len: usize, value: f64) -> Self {
        WeeklySeries::new(start, vec![value; len])
    }

    /// Builds from sparse entries; weeks must be strictly increasing and any
    /// weeks missing inside the span are filled with zero.
    pub fn from_entries(entries: &[(Week, f64)]) -> Result<Self> {
        let Some(&(first, _)) = entries.first() else {
            return Ok(WeeklySeries::empty());
        };
        let mut values = Vec::new();
        let mut prev: Option<Week> = None;
        for &(w, v) in entries {
            if let Some(p) = prev {
                if w <= p {
                    return Err(Error::Data(format!(
                        "weeks must be strictly increasing, got {w} after {p}"
                    )));
                }
                values.extend(std::iter::repeat_n(0.0, (w - p - 1) as usize));
            }
            values.push(v);
            prev = Some(w);
        }
        Ok(WeeklySeries::new(first, values))
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// First week, `None` when empty.
    pub fn start(&self) -> Option<Week> {
        (!self.is_empty()).then_some(self.start)
    }

    /// Last week (inclusive), `None` when empty.
    pub fn end(&self) -> Option<Week> {
        (!self.is_empty()).then(|| self.start + self.values.len() as Week - 1)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weeks(&self) -> impl Iterator<Item = Week> + '_ {
        (0..self.values.len()).map(move |i| self.start + i as Week)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Week, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.start + i as Week, v))
    }

    pub fn get(&self, week: Week) -> Option<f64> {
        if self.is_empty() || week < self.start {
            return None;
        }
        self.values.get((week - self.start) as usize).copied()
    }

    pub fn contains(&self, week: Week) -> bool {
        self.get(week).is_some()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Restriction to `[from, to]` intersected with the series span.
    pub fn slice(&self, from: Week, to: Week) -> WeeklySeries {
        let (Some(s), Some(e)) = (self.start(), self.end()) else {
            return WeeklySeries::empty();
        };
        let lo = from.max(s);
        let hi = to.min(e);
        if lo > hi {
            return WeeklySeries::empty();
        }
        let a = (lo - s) as usize;
        let b = (hi - s) as usize;
        WeeklySeries::new(lo, self.values[a..=b].to_vec())
    }

    pub fn truncate_after(&self, week: Week) -> WeeklySeries {
        self.slice(Week::MIN, week)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> WeeklySeries {
        WeeklySeries::new(self.start, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Appends values continuing after the current end.
    pub fn extended(&self, more: &[f64]) -> WeeklySeries {
        let mut values = self.values.clone();
        values.extend_from_slice(more);
        WeeklySeries::new(self.start, values)
    }

    /// Values for each requested week, or the list of weeks not covered.
    pub fn values_at(&self, weeks: &[Week]) -> std::result::Result<Vec<f64>, Vec<Week>> {
        let missing: Vec<Week> = weeks.iter().copied().filter(|&w| !self.contains(w)).collect();
        if !missing.is_empty() {
            return Err(missing);
        }
        Ok(weeks.iter().map(|&w| self.get(w).unwrap_or_default()).collect())
    }
}

/// Sums payments per absolute week; weeks inside the span without payments
/// carry zero. Amounts are summed exactly in cents before conversion.
pub fn aggregate_weekly(payments: &[(NaiveDate, Money)], cal: &FiscalCalendar) -> Result<WeeklySeries> {
    let mut buckets: BTreeMap<Week, Money> = BTreeMap::new();
    for &(date, amount) in payments {
        let w = cal.week_index(date)?;
        *buckets.entry(w).or_default() += amount;
    }
    let entries: Vec<(Week, f64)> = buckets.into_iter().map(|(w, m)| (w, m.to_f64())).collect();
    WeeklySeries::from_entries(&entries)
}

/// Exact per-week sums in cents; used where bit-equality with realized
/// aggregation matters.
pub(crate) fn aggregate_cents(
    payments: impl IntoIterator<Item = (Week, Money)>,
) -> BTreeMap<Week, Money> {
    let mut buckets: BTreeMap<Week, Money> = BTreeMap::new();
    for (w, m) in payments {
        *buckets.entry(w).or_default() += m;
    }
    buckets
}
