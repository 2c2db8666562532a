//! Customer behavioral attributes: delay (speed-to-pay), average payment,
//! payment deviation and 90-day recent speed-to-pay.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invoice::{Invoice, Segment};

/// Window for recent speed-to-pay, anchored at the latest payment.
pub const RECENT_WINDOW_DAYS: i64 = 90;
/// Half-life of the recency weights applied to delays.
pub const RECENCY_HALF_LIFE_DAYS: f64 = 90.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerProfile {
    pub customer_id: String,
    pub segment: Segment,
    pub mean_delay_days: f64,
    pub recency_weighted_delay_days: f64,
    pub avg_payment: f64,
    pub payment_std: f64,
    pub recent_speed_to_pay_days: f64,
    /// Closed invoices used; zero only for cold-start profiles.
    pub n_invoices: usize,
    pub as_of: NaiveDate,
    pub cold_start: bool,
}

/// Signed whole days between payment and due date; negative is early.
pub fn payment_delay(invoice: &Invoice) -> Result<i64> {
    let paid = invoice.payment_date.ok_or_else(|| {
        Error::MissingData(format!("invoice {} is open", invoice.invoice_id))
    })?;
    Ok((paid - invoice.due_date).num_days())
}

pub fn average_payment(payments: &[f64]) -> Result<f64> {
    if payments.is_empty() {
        return Err(Error::MissingData("no payments to average".into()));
    }
    Ok(payments.iter().sum::<f64>() / payments.len() as f64)
}

/// Population standard deviation (divisor N).
pub fn payment_std(payments: &[f64]) -> Result<f64> {
    let mean = average_payment(payments)?;
    if payments.iter().all(|&p| p == payments[0]) {
        return Ok(0.0);
    }
    let var = payments.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / payments.len() as f64;
    Ok(var.sqrt())
}

/// Mean delay over payments in `(latest - 90 days, latest]`, where `latest` is
/// the customer's most recent payment on or before `as_of`.
pub fn recent_speed_to_pay(closed: &[Invoice], as_of: NaiveDate) -> Result<f64> {
    let paid: Vec<(NaiveDate, i64)> = closed
        .iter()
        .filter_map(|i| i.payment_date.filter(|p| *p <= as_of).map(|p| (p, (p - i.due_date).num_days())))
        .collect();
    let latest = paid
        .iter()
        .map(|p| p.0)
        .max()
        .ok_or_else(|| Error::MissingData("no closed invoices".into()))?;
    let start = latest - Duration::days(RECENT_WINDOW_DAYS);
    let in_window: Vec<f64> = paid
        .iter()
        .filter(|(d, _)| *d > start && *d <= latest)
        .map(|(_, delay)| *delay as f64)
        .collect();
    Ok(in_window.iter().sum::<f64>() / in_window.len() as f64)
}

fn recency_weighted_delay(closed: &[(NaiveDate, i64)], as_of: NaiveDate) -> f64 {
    let lambda = std::f64::consts::LN_2 / RECENCY_HALF_LIFE_DAYS;
    let (mut num, mut den) = (0.0, 0.0);
    for &(paid, delay) in closed {
        let age = (as_of - paid).num_days() as f64;
        let w = (-lambda * age).exp();
        num += w * delay as f64;
        den += w;
    }
    num / den
}

/// Segment-level fallback values for customers without closed history.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentDefaults {
    values: BTreeMap<Segment, [f64; 5]>,
}

impl SegmentDefaults {
    /// Per-segment medians of the given non-cold-start profiles. Segments with
    /// no profiles fall back to the all-segment median, or zeros.
    pub fn from_profiles(profiles: &[CustomerProfile]) -> Self {
        let fields = |p: &CustomerProfile| {
            [
                p.mean_delay_days,
                p.recency_weighted_delay_days,
                p.avg_payment,
                p.payment_std,
                p.recent_speed_to_pay_days,
            ]
        };
        let warm: Vec<&CustomerProfile> = profiles.iter().filter(|p| !p.cold_start).collect();
        let medians = |ps: &[&CustomerProfile]| -> Option<[f64; 5]> {
            if ps.is_empty() {
                return None;
            }
            let mut out = [0.0; 5];
            for (k, slot) in out.iter_mut().enumerate() {
                let mut v: Vec<f64> = ps.iter().map(|p| fields(p)[k]).collect();
                *slot = median(&mut v);
            }
            Some(out)
        };
        let global = medians(&warm).unwrap_or([0.0; 5]);
        let values = Segment::ALL
            .iter()
            .map(|&s| {
                let seg: Vec<&CustomerProfile> = warm.iter().copied().filter(|p| p.segment == s).collect();
                (s, medians(&seg).unwrap_or(global))
            })
            .collect();
        SegmentDefaults { values }
    }

    pub fn cold_profile(&self, customer_id: &str, segment: Segment, as_of: NaiveDate) -> CustomerProfile {
        let v = self.values.get(&segment).copied().unwrap_or([0.0; 5]);
        CustomerProfile {
            customer_id: customer_id.to_string(),
            segment,
            mean_delay_days: v[0],
            recency_weighted_delay_days: v[1],
            avg_payment: v[2],
            payment_std: v[3],
            recent_speed_to_pay_days: v[4],
            n_invoices: 0,
            as_of,
            cold_start: true,
        }
    }
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Builds a profile from one customer's invoices using only payments on or
/// before `as_of`. Without usable history the segment default is returned,
/// flagged `cold_start`.
pub fn build_profile(invoices: &[Invoice], as_of: NaiveDate, defaults: &SegmentDefaults) -> Result<CustomerProfile> {
    let first = invoices
        .first()
        .ok_or_else(|| Error::MissingData("no invoices for customer".into()))?;
    let mut closed: Vec<(NaiveDate, i64, f64)> = invoices
        .iter()
        .filter_map(|i| {
            i.payment_date
                .filter(|p| *p <= as_of)
                .map(|p| (p, (p - i.due_date).num_days(), i.amount.to_f64()))
        })
        .collect();
    if closed.is_empty() {
        return Ok(defaults.cold_profile(&first.customer_id, first.segment, as_of));
    }
    closed.sort_by_key(|c| c.0);
    Ok(profile_from_sorted(&first.customer_id, first.segment, &closed, as_of))
}

fn profile_from_sorted(
    customer_id: &str,
    segment: Segment,
    closed: &[(NaiveDate, i64, f64)],
    as_of: NaiveDate,
) -> CustomerProfile {
    let n = closed.len() as f64;
    let amounts: Vec<f64> = closed.iter().map(|c| c.2).collect();
    let delays: Vec<(NaiveDate, i64)> = closed.iter().map(|c| (c.0, c.1)).collect();
    let latest = closed.last().map(|c| c.0).unwrap_or(as_of);
    let window_start = latest - Duration::days(RECENT_WINDOW_DAYS);
    let recent: Vec<f64> = delays
        .iter()
        .filter(|(d, _)| *d > window_start)
        .map(|(_, x)| *x as f64)
        .collect();
    CustomerProfile {
        customer_id: customer_id.to_string(),
        segment,
        mean_delay_days: delays.iter().map(|d| d.1 as f64).sum::<f64>() / n,
        recency_weighted_delay_days: recency_weighted_delay(&delays, as_of),
        avg_payment: amounts.iter().sum::<f64>() / n,
        payment_std: payment_std(&amounts).unwrap_or(0.0),
        recent_speed_to_pay_days: recent.iter().sum::<f64>() / recent.len() as f64,
        n_invoices: closed.len(),
        as_of,
        cold_start: false,
    }
}

/// Segment and closed history `(payment date, delay days, amount)` sorted by
/// payment date.
type CustomerHistory = (Segment, Vec<(NaiveDate, i64, f64)>);

/// Per-customer closed history indexed for repeated as-of profile queries.
#[derive(Debug, Clone)]
pub struct ProfileBook {
    customers: BTreeMap<String, CustomerHistory>,
    defaults: SegmentDefaults,
}

impl ProfileBook {
    /// Indexes `invoices` (typically already censored at a cutoff). Segment
    /// defaults are computed from profiles as of `defaults_as_of`.
    pub fn new(invoices: &[Invoice], defaults_as_of: NaiveDate) -> Self {
        let mut customers: BTreeMap<String, CustomerHistory> = BTreeMap::new();
        for inv in invoices {
            let entry = customers
                .entry(inv.customer_id.clone())
                .or_insert_with(|| (inv.segment, Vec::new()));
            if let Some(p) = inv.payment_date {
                entry.1.push((p, (p - inv.due_date).num_days(), inv.amount.to_f64()));
            }
        }
        for (_, hist) in customers.values_mut() {
            hist.sort_by_key(|c| c.0);
        }
        let mut book = ProfileBook {
            customers,
            defaults: SegmentDefaults::default(),
        };
        let warm: Vec<CustomerProfile> = book
            .customers
            .keys()
            .filter_map(|c| book.warm_profile(c, defaults_as_of))
            .collect();
        book.defaults = SegmentDefaults::from_profiles(&warm);
        book
    }

    fn warm_profile(&self, customer_id: &str, as_of: NaiveDate) -> Option<CustomerProfile> {
        let (segment, hist) = self.customers.get(customer_id)?;
        let upto = hist.partition_point(|c| c.0 <= as_of);
        (upto > 0).then(|| profile_from_sorted(customer_id, *segment, &hist[..upto], as_of))
    }

    pub fn defaults(&self) -> &SegmentDefaults {
        &self.defaults
    }

    /// Profile as of `as_of`; unknown customers and customers without closed
    /// history get the cold-start default of `segment`.
    pub fn profile_at(&self, customer_id: &str, segment: Segment, as_of: NaiveDate) -> CustomerProfile {
        self.warm_profile(customer_id, as_of)
            .unwrap_or_else(|| self.defaults.cold_profile(customer_id, segment, as_of))
    }

    pub fn all_profiles(&self, as_of: NaiveDate) -> Vec<CustomerProfile> {
        self.customers
            .iter()
            .map(|(id, (seg, _))| self.profile_at(id, *seg, as_of))
            .collect()
    }
}
