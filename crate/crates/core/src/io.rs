//! CSV schemas.
//!
//! `invoices.csv`: `invoice_id,customer_id,segment,issue_date,due_date,amount,payment_date,payment_terms_days`
//! with ISO-8601 dates, a decimal-point amount and an empty `payment_date` for
//! open invoices.
//!
//! `support.csv`: `date,series_name,value`; rows are summed per fiscal week on
//! ingest and written one row per week (dated at the week's first day).

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use chrono::NaiveDate;

use crate::calendar::{FiscalCalendar, Week};
use crate::error::{Error, Result, RowError};
use crate::invoice::{Invoice, Segment};
use crate::money::Money;
use crate::series::WeeklySeries;

pub const INVOICE_HEADER: [&str; 8] = [
    "invoice_id",
    "customer_id",
    "segment",
    "issue_date",
    "due_date",
    "amount",
    "payment_date",
    "payment_terms_days",
];

pub const SUPPORT_HEADER: [&str; 3] = ["date", "series_name", "value"];

pub fn write_invoices(path: &Path, invoices: &[Invoice]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(INVOICE_HEADER)?;
    for inv in invoices {
        w.write_record([
            inv.invoice_id.clone(),
            inv.customer_id.clone(),
            inv.segment.to_string(),
            inv.issue_date.to_string(),
            inv.due_date.to_string(),
            inv.amount.to_string(),
            inv.payment_date.map(|d| d.to_string()).unwrap_or_default(),
            inv.payment_terms_days.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_support(
    path: &Path,
    support: &BTreeMap<String, WeeklySeries>,
    cal: &FiscalCalendar,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUPPORT_HEADER)?;
    for (name, series) in support {
        for (week, value) in series.iter() {
            w.write_record([
                cal.first_date_of(week)?.to_string(),
                name.clone(),
                format_value(value),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same f64.
pub(crate) fn format_value(v: f64) -> String {
    format!("{v}")
}

fn check_header(file: &str, got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    let got: Vec<&str> = got.iter().map(str::trim).collect();
    if got != want {
        return Err(Error::Ingest(vec![RowError {
            file: file.to_string(),
            line: 1,
            message: format!("expected header {:?}, found {:?}", want.join(","), got.join(",")),
        }]));
    }
    Ok(())
}

fn parse_date(field: &str, name: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(field.trim(), "%Y-%m-%d")
        .map_err(|_| format!("{name}: invalid ISO-8601 date {field:?}"))
}

pub fn read_invoices(path: &Path, cal: &FiscalCalendar) -> Result<Vec<Invoice>> {
    let file = path.display().to_string();
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    check_header(&file, r.headers()?, &INVOICE_HEADER)?;
    let mut errors = Vec::new();
    let mut invoices = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in r.records().enumerate() {
        let line = i as u64 + 2;
        let rec = match rec {
            Ok(rec) => rec,
            Err(e) => {
                errors.push(RowError { file: file.clone(), line, message: e.to_string() });
                continue;
            }
        };
        match parse_invoice(&rec, cal) {
            Ok(inv) => {
                if !seen.insert(inv.invoice_id.clone()) {
                    errors.push(RowError {
                        file: file.clone(),
                        line,
                        message: format!("duplicate invoice_id {}", inv.invoice_id),
                    });
                } else {
                    invoices.push(inv);
                }
            }
            Err(message) => errors.push(RowError { file: file.clone(), line, message }),
        }
    }
    if errors.is_empty() {
        Ok(invoices)
    } else {
        Err(Error::Ingest(errors))
    }
}

fn parse_invoice(rec: &csv::StringRecord, cal: &FiscalCalendar) -> std::result::Result<Invoice, String> {
    if rec.len() != INVOICE_HEADER.len() {
        return Err(format!("expected {} fields, found {}", INVOICE_HEADER.len(), rec.len()));
    }
    let id = rec[0].trim();
    if id.is_empty() {
        return Err("invoice_id is empty".into());
    }
    let customer = rec[1].trim();
    if customer.is_empty() {
        return Err("customer_id is empty".into());
    }
    let segment: Segment = rec[2].parse().map_err(|e: Error| e.to_string())?;
    let issue = parse_date(&rec[3], "issue_date")?;
    let due = parse_date(&rec[4], "due_date")?;
    let amount: Money = rec[5].parse().map_err(|e: Error| e.to_string())?;
    let payment = match rec[6].trim() {
        "" => None,
        s => Some(parse_date(s, "payment_date")?),
    };
    let terms: u32 = rec[7]
        .trim()
        .parse()
        .map_err(|_| format!("payment_terms_days: invalid nonnegative integer {:?}", &rec[7]))?;
    for d in std::iter::once(issue).chain(payment) {
        cal.week_of(d).map_err(|e| e.to_string())?;
    }
    Invoice::new(id, customer, segment, issue, due, amount, payment, terms).map_err(|e| e.to_string())
}

pub fn read_support(path: &Path, cal: &FiscalCalendar) -> Result<BTreeMap<String, WeeklySeries>> {
    let file = path.display().to_string();
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    check_header(&file, r.headers()?, &SUPPORT_HEADER)?;
    let mut errors = Vec::new();
    let mut buckets: BTreeMap<String, BTreeMap<Week, f64>> = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let line = i as u64 + 2;
        let parsed = rec.map_err(|e| e.to_string()).and_then(|rec| {
            if rec.len() != 3 {
                return Err(format!("expected 3 fields, found {}", rec.len()));
            }
            let date = parse_date(&rec[0], "date")?;
            let week = cal.week_index(date).map_err(|e| e.to_string())?;
            let name = rec[1].trim().to_string();
            if name.is_empty() {
                return Err("series_name is empty".into());
            }
            let value: f64 = rec[2]
                .trim()
                .parse()
                .map_err(|_| format!("value: invalid number {:?}", &rec[2]))?;
            if !value.is_finite() {
                return Err(format!("value: non-finite {value}"));
            }
            Ok((name, week, value))
        });
        match parsed {
            Ok((name, week, value)) => *buckets.entry(name).or_default().entry(week).or_default() += value,
            Err(message) => errors.push(RowError { file: file.clone(), line, message }),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Ingest(errors));
    }
    buckets
        .into_iter()
        .map(|(name, weeks)| {
            let entries: Vec<(Week, f64)> = weeks.into_iter().collect();
            Ok((name, WeeklySeries::from_entries(&entries)?))
        })
        .collect()
}

pub fn write_series_csv(path: &Path, columns: &[(&str, &WeeklySeries)], cal: &FiscalCalendar) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["week".to_string(), "date".to_string()];
    header.extend(columns.iter().map(|c| c.0.to_string()));
    w.write_record(&header)?;
    let start = columns.iter().filter_map(|c| c.1.start()).min();
    let end = columns.iter().filter_map(|c| c.1.end()).max();
    if let (Some(s), Some(e)) = (start, end) {
        for week in s..=e {
            let mut row = vec![week.to_string(), cal.first_date_of(week)?.to_string()];
            row.extend(columns.iter().map(|c| c.1.get(week).map(format_value).unwrap_or_default()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
