//! Fiscal calendar: 4 quarters of 13 weeks, anchored at a fiscal year start.
//!
//! Absolute weeks are 1-based and count 7-day blocks from the first configured
//! fiscal year start, so week 40 is always the first Q4 week of year one.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WEEKS_PER_QUARTER: u32 = 13;
pub const QUARTERS_PER_YEAR: u32 = 4;
pub const WEEKS_PER_YEAR: u32 = WEEKS_PER_QUARTER * QUARTERS_PER_YEAR;

/// An absolute fiscal week index (1-based).
pub type Week = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiscalCalendar {
    pub fiscal_year_start: NaiveDate,
    /// Fiscal year label of the first configured year.
    #[serde(default = "default_first_year")]
    pub first_fiscal_year: i32,
    /// Number of configured fiscal years; dates past the last one are out of range.
    #[serde(default = "default_years")]
    pub years: u32,
}

fn default_first_year() -> i32 {
    1
}

fn default_years() -> u32 {
    20
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FiscalWeek {
    pub fiscal_year: i32,
    pub quarter: u32,
    pub week_in_quarter: u32,
    pub absolute_week: Week,
}

impl FiscalCalendar {
    pub fn new(fiscal_year_start: NaiveDate) -> Self {
        FiscalCalendar {
            fiscal_year_start,
            first_fiscal_year: default_first_year(),
            years: default_years(),
        }
    }

    pub fn last_week(&self) -> Week {
        (self.years * WEEKS_PER_YEAR) as Week
    }

    pub fn week_of(&self, date: NaiveDate) -> Result<FiscalWeek> {
        let days = (date - self.fiscal_year_start).num_days();
        if days < 0 {
            return Err(Error::Range(format!(
                "{date} precedes fiscal calendar start {}",
                self.fiscal_year_start
            )));
        }
        let absolute_week = days / 7 + 1;
        if absolute_week > self.last_week() {
            return Err(Error::Range(format!(
                "{date} is past the last configured fiscal year"
            )));
        }
        Ok(self.describe(absolute_week))
    }

    /// Absolute week only; same range rules as [`week_of`](Self::week_of).
    pub fn week_index(&self, date: NaiveDate) -> Result<Week> {
        self.week_of(date).map(|w| w.absolute_week)
    }

    pub fn check_week(&self, week: Week) -> Result<()> {
        if week < 1 || week > self.last_week() {
            return Err(Error::Range(format!(
                "week {week} outside calendar range 1..={}",
                self.last_week()
            )));
        }
        Ok(())
    }

    pub fn fiscal_week(&self, week: Week) -> Result<FiscalWeek> {
        self.check_week(week)?;
        Ok(self.describe(week))
    }

    fn describe(&self, absolute_week: Week) -> FiscalWeek {
        let zero = (absolute_week - 1) as u32;
        let week_in_year = zero % WEEKS_PER_YEAR;
        FiscalWeek {
            fiscal_year: self.first_fiscal_year + (zero / WEEKS_PER_YEAR) as i32,
            quarter: week_in_year / WEEKS_PER_QUARTER + 1,
            week_in_quarter: week_in_year % WEEKS_PER_QUARTER + 1,
            absolute_week,
        }
    }

    pub fn is_q4(&self, week: Week) -> Result<bool> {
        Ok(self.fiscal_week(week)?.quarter == 4)
    }

    /// Quarter lookup for weeks that may lie outside the configured range
    /// (e.g. lag arithmetic); the 52-week cycle is extended in both directions.
    pub fn quarter_unchecked(week: Week) -> u32 {
        let week_in_year = (week - 1).rem_euclid(WEEKS_PER_YEAR as Week) as u32;
        week_in_year / WEEKS_PER_QUARTER + 1
    }

    pub fn first_date_of(&self, week: Week) -> Result<NaiveDate> {
        self.check_week(week)?;
        Ok(self.fiscal_year_start + Duration::days((week - 1) * 7))
    }

    pub fn last_date_of(&self, week: Week) -> Result<NaiveDate> {
        Ok(self.first_date_of(week)? + Duration::days(6))
    }
}
