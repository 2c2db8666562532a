use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::Money;

/// Market segment. The declaration order is the one-hot order used by the
/// closure model features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Segment {
    #[serde(rename = "CSB")]
    Csb,
    Commercial,
    Enterprise,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::Csb, Segment::Commercial, Segment::Enterprise];

    pub fn index(self) -> usize {
        match self {
            Segment::Csb => 0,
            Segment::Commercial => 1,
            Segment::Enterprise => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Segment::Csb => "CSB",
            Segment::Commercial => "Commercial",
            Segment::Enterprise => "Enterprise",
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Segment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "CSB" => Ok(Segment::Csb),
            "Commercial" => Ok(Segment::Commercial),
            "Enterprise" => Ok(Segment::Enterprise),
            other => Err(Error::Validation(format!("unknown segment {other:?}"))),
        }
    }
}

/// One receivable. Construct through [`Invoice::new`] so the date and amount
/// invariants hold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invoice {
    pub invoice_id: String,
    pub customer_id: String,
    pub segment: Segment,
    pub issue_date: NaiveDate,
    pub due_date: NaiveDate,
    pub amount: Money,
    pub payment_date: Option<NaiveDate>,
    pub payment_terms_days: u32,
}

impl Invoice {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        invoice_id: impl Into<String>,
        customer_id: impl Into<String>,
        segment: Segment,
        issue_date: NaiveDate,
        due_date: NaiveDate,
        amount: Money,
        payment_date: Option<NaiveDate>,
        payment_terms_days: u32,
    ) -> Result<Self> {
        let inv = Invoice {
            invoice_id: invoice_id.into(),
            customer_id: customer_id.into(),
            segment,
            issue_date,
            due_date,
            amount,
            payment_date,
            payment_terms_days,
        };
        inv.validate()?;
        Ok(inv)
    }

    pub fn validate(&self) -> Result<()> {
        if self.due_date < self.issue_date {
            return Err(Error::Validation(format!(
                "invoice {}: due_date {} precedes issue_date {}",
                self.invoice_id, self.due_date, self.issue_date
            )));
        }
        if !self.amount.is_positive() {
            return Err(Error::Validation(format!(
                "invoice {}: amount must be positive, got {}",
                self.invoice_id, self.amount
            )));
        }
        if let Some(paid) = self.payment_date {
            if paid < self.issue_date {
                return Err(Error::Validation(format!(
                    "invoice {}: payment_date {} precedes issue_date {}",
                    self.invoice_id, paid, self.issue_date
                )));
            }
        }
        Ok(())
    }

    pub fn is_closed(&self) -> bool {
        self.payment_date.is_some()
    }

    /// Days from issue to payment, the closure model target.
    pub fn days_to_close(&self) -> Option<i64> {
        self.payment_date.map(|p| (p - self.issue_date).num_days())
    }

    /// The invoice as it looked at the end of `cutoff`: payments after the
    /// cutoff are hidden. `None` if it was not yet issued.
    pub fn as_of(&self, cutoff: NaiveDate) -> Option<Invoice> {
        if self.issue_date > cutoff {
            return None;
        }
        let mut inv = self.clone();
        if matches!(inv.payment_date, Some(p) if p > cutoff) {
            inv.payment_date = None;
        }
        Some(inv)
    }
}
