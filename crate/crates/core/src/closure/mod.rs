//! Invoice closure prediction: days from issue to payment, regressed with a
//! gradient-boosted tree ensemble on invoice and customer-profile features.

pub mod gbt;

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::calendar::FiscalCalendar;
use crate::error::{Error, Result};
use crate::invoice::{Invoice, Segment};
use crate::profiles::{median, CustomerProfile, ProfileBook};

pub use gbt::{Booster, GbtParams, TreeNode};

/// Bumped whenever [`FEATURE_NAMES`] changes order or meaning.
pub const FEATURE_VERSION: u32 = 1;

pub const FEATURE_NAMES: [&str; 13] = [
    "amount",
    "payment_terms_days",
    "mean_delay_days",
    "recency_weighted_delay_days",
    "avg_payment",
    "payment_std",
    "recent_speed_to_pay_days",
    "issue_week_in_quarter",
    "is_q4",
    "segment_csb",
    "segment_commercial",
    "segment_enterprise",
    "cold_start",
];

pub const N_FEATURES: usize = FEATURE_NAMES.len();

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.0[i])
    }

    pub fn segment_one_hot(&self) -> [f64; 3] {
        [self.0[9], self.0[10], self.0[11]]
    }
}

/// Encodes an invoice with the profile its customer had at issue time.
/// Missing numerics come out as NaN and are imputed by the model's encoding
/// table.
pub fn encode(invoice: &Invoice, profile: &CustomerProfile, cal: &FiscalCalendar) -> Result<FeatureVector> {
    if profile.as_of > invoice.issue_date {
        return Err(Error::Validation(format!(
            "profile for invoice {} is as of {}, after its issue date {}",
            invoice.invoice_id, profile.as_of, invoice.issue_date
        )));
    }
    if profile.segment != invoice.segment {
        return Err(Error::Validation(format!(
            "invoice {} segment {} does not match profile segment {}",
            invoice.invoice_id, invoice.segment, profile.segment
        )));
    }
    let fw = cal.week_of(invoice.issue_date)?;
    let mut seg = [0.0; 3];
    seg[invoice.segment.index()] = 1.0;
    let finite = |v: f64| if v.is_finite() { v } else { f64::NAN };
    Ok(FeatureVector([
        invoice.amount.to_f64(),
        invoice.payment_terms_days as f64,
        finite(profile.mean_delay_days),
        finite(profile.recency_weighted_delay_days),
        finite(profile.avg_payment),
        finite(profile.payment_std),
        finite(profile.recent_speed_to_pay_days),
        fw.week_in_quarter as f64,
        if fw.quarter == 4 { 1.0 } else { 0.0 },
        seg[0],
        seg[1],
        seg[2],
        if profile.cold_start { 1.0 } else { 0.0 },
    ]))
}

/// Feature layout and the training-set medians used to impute missing values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingTable {
    pub version: u32,
    pub feature_names: Vec<String>,
    pub segment_order: Vec<Segment>,
    pub medians: Vec<f64>,
}

impl EncodingTable {
    fn fit(rows: &[FeatureVector]) -> Self {
        let medians = (0..N_FEATURES)
            .map(|k| {
                let mut v: Vec<f64> = rows.iter().map(|r| r.0[k]).filter(|v| v.is_finite()).collect();
                median(&mut v)
            })
            .collect();
        EncodingTable {
            version: FEATURE_VERSION,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            segment_order: Segment::ALL.to_vec(),
            medians,
        }
    }

    pub fn impute(&self, fv: &FeatureVector) -> Vec<f64> {
        fv.0.iter()
            .zip(&self.medians)
            .map(|(&v, &m)| if v.is_finite() { v } else { m })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub booster: Booster,
    pub encoding: EncodingTable,
}

impl GbtModel {
    pub fn fit(rows: &[(FeatureVector, f64)], params: GbtParams) -> Result<GbtModel> {
        let features: Vec<FeatureVector> = rows.iter().map(|r| r.0).collect();
        let encoding = EncodingTable::fit(&features);
        let x: Vec<Vec<f64>> = features.iter().map(|f| encoding.impute(f)).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
        Ok(GbtModel {
            booster: gbt::fit_matrix(&x, &y, params)?,
            encoding,
        })
    }

    pub fn predict_days(&self, fv: &FeatureVector) -> f64 {
        self.booster.predict(&self.encoding.impute(fv))
    }
}

/// `issue_date + round(max(0, predicted days))`.
pub fn close_date_from_days(issue: NaiveDate, days: f64) -> NaiveDate {
    issue + Duration::days(days.max(0.0).round() as i64)
}

pub fn predict_close_date(
    model: &GbtModel,
    invoice: &Invoice,
    profile: &CustomerProfile,
    cal: &FiscalCalendar,
) -> Result<NaiveDate> {
    let fv = encode(invoice, profile, cal)?;
    Ok(close_date_from_days(invoice.issue_date, model.predict_days(&fv)))
}

/// Anything that can place an invoice's closure on the calendar.
pub trait ClosurePredictor {
    fn predict_close_date(&self, invoice: &Invoice, profile: &CustomerProfile, cal: &FiscalCalendar) -> Result<NaiveDate>;
}

/// Closure model with an explicit unfitted state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureModel {
    pub params: GbtParams,
    pub model: Option<GbtModel>,
}

impl ClosureModel {
    pub fn new(params: GbtParams) -> Self {
        ClosureModel { params, model: None }
    }

    /// Training rows from closed invoices, each encoded with its customer's
    /// profile as of the issue date.
    pub fn training_rows(invoices: &[Invoice], book: &ProfileBook, cal: &FiscalCalendar) -> Result<Vec<(FeatureVector, f64)>> {
        invoices
            .iter()
            .filter_map(|inv| inv.days_to_close().map(|d| (inv, d)))
            .map(|(inv, days)| {
                let profile = book.profile_at(&inv.customer_id, inv.segment, inv.issue_date);
                Ok((encode(inv, &profile, cal)?, days as f64))
            })
            .collect()
    }

    pub fn train(&mut self, invoices: &[Invoice], book: &ProfileBook, cal: &FiscalCalendar) -> Result<()> {
        let rows = Self::training_rows(invoices, book, cal)?;
        self.model = Some(GbtModel::fit(&rows, self.params)?);
        Ok(())
    }

    pub fn fitted(&self) -> Result<&GbtModel> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::State("closure model has not been fitted".into()))
    }
}

impl ClosurePredictor for ClosureModel {
    fn predict_close_date(&self, invoice: &Invoice, profile: &CustomerProfile, cal: &FiscalCalendar) -> Result<NaiveDate> {
        predict_close_date(self.fitted()?, invoice, profile, cal)
    }
}

impl ClosurePredictor for GbtModel {
    fn predict_close_date(&self, invoice: &Invoice, profile: &CustomerProfile, cal: &FiscalCalendar) -> Result<NaiveDate> {
        predict_close_date(self, invoice, profile, cal)
    }
}

/// Perfect predictor backed by known payment dates (synthetic ground truth).
#[derive(Debug, Clone, Default)]
pub struct KnownClosures(pub BTreeMap<String, NaiveDate>);

impl ClosurePredictor for KnownClosures {
    fn predict_close_date(&self, invoice: &Invoice, _profile: &CustomerProfile, _cal: &FiscalCalendar) -> Result<NaiveDate> {
        self.0
            .get(&invoice.invoice_id)
            .copied()
            .ok_or_else(|| Error::MissingData(format!("no known closure for {}", invoice.invoice_id)))
    }
}

/// Mean absolute error in days between predicted and actual closure dates.
pub fn mean_abs_close_error_days(
    predictor: &dyn ClosurePredictor,
    invoices: &[Invoice],
    actual: &BTreeMap<String, NaiveDate>,
    book: &ProfileBook,
    cal: &FiscalCalendar,
) -> Result<Option<f64>> {
    let mut total = 0.0;
    let mut n = 0usize;
    for inv in invoices {
        let Some(&truth) = actual.get(&inv.invoice_id) else { continue };
        let profile = book.profile_at(&inv.customer_id, inv.segment, inv.issue_date);
        let pred = predictor.predict_close_date(inv, &profile, cal)?;
        total += (pred - truth).num_days().abs() as f64;
        n += 1;
    }
    Ok((n > 0).then(|| total / n as f64))
}
