use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::calendar::{FiscalCalendar, Week};
use crate::error::{Error, Result};
use crate::invoice::Invoice;
use crate::money::Money;
use crate::series::{aggregate_weekly, WeeklySeries};
use crate::synthgen::Truth;

/// Invoices plus named weekly support series. `truth` is only populated by the
/// synthetic generator and is never read by the forecasting pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub invoices: Vec<Invoice>,
    pub support: BTreeMap<String, WeeklySeries>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Truth>,
}

impl Dataset {
    pub fn new(invoices: Vec<Invoice>, support: BTreeMap<String, WeeklySeries>) -> Self {
        Dataset {
            invoices,
            support,
            truth: None,
        }
    }

    pub fn without_truth(&self) -> Dataset {
        Dataset {
            invoices: self.invoices.clone(),
            support: self.support.clone(),
            truth: None,
        }
    }

    pub fn closed_payments(&self) -> Vec<(NaiveDate, Money)> {
        self.invoices
            .iter()
            .filter_map(|i| i.payment_date.map(|p| (p, i.amount)))
            .collect()
    }

    /// Realized weekly collections.
    pub fn collections(&self, cal: &FiscalCalendar) -> Result<WeeklySeries> {
        aggregate_weekly(&self.closed_payments(), cal)
    }

    /// Latest week with any observed activity (issue or payment date).
    pub fn last_observed_week(&self, cal: &FiscalCalendar) -> Result<Week> {
        let latest = self
            .invoices
            .iter()
            .flat_map(|i| std::iter::once(i.issue_date).chain(i.payment_date))
            .max()
            .ok_or_else(|| Error::Data("dataset has no invoices".into()))?;
        cal.week_index(latest)
    }

    /// The dataset as visible at the end of `cutoff_week`: later invoices are
    /// dropped, later payments hidden and support truncated.
    pub fn censor(&self, cutoff_week: Week, cal: &FiscalCalendar) -> Result<Dataset> {
        let cutoff = cal.last_date_of(cutoff_week)?;
        Ok(Dataset {
            invoices: self.invoices.iter().filter_map(|i| i.as_of(cutoff)).collect(),
            support: self
                .support
                .iter()
                .map(|(k, s)| (k.clone(), s.truncate_after(cutoff_week)))
                .collect(),
            truth: None,
        })
    }

    /// Latest date present in the data; used by the leakage audit.
    pub fn max_date(&self) -> Option<NaiveDate> {
        self.invoices
            .iter()
            .flat_map(|i| std::iter::once(i.issue_date).chain(i.payment_date))
            .max()
    }

    pub fn max_support_week(&self) -> Option<Week> {
        self.support.values().filter_map(|s| s.end()).max()
    }
}
