//! Leakage audit: each stage reports the latest data date it consumed, which
//! is checked against the forecast origin's cutoff.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::calendar::Week;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub origin: Week,
    pub stage: String,
    pub cutoff: NaiveDate,
    pub max_input_date: Option<NaiveDate>,
}

impl AuditEntry {
    pub fn is_violation(&self) -> bool {
        self.max_input_date.is_some_and(|d| d > self.cutoff)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub entries: Vec<AuditEntry>,
    /// Regressor and feature groups that entered any forecaster fit.
    pub feature_groups: BTreeSet<String>,
}

impl Audit {
    pub fn record(&mut self, origin: Week, stage: &str, cutoff: NaiveDate, max_input_date: Option<NaiveDate>) {
        self.entries.push(AuditEntry { origin, stage: stage.to_string(), cutoff, max_input_date });
    }

    pub fn use_group(&mut self, group: &str) {
        self.feature_groups.insert(group.to_string());
    }

    pub fn violations(&self) -> Vec<&AuditEntry> {
        self.entries.iter().filter(|e| e.is_violation()).collect()
    }

    pub fn merge(&mut self, other: Audit) {
        self.entries.extend(other.entries);
        self.feature_groups.extend(other.feature_groups);
    }

    pub fn summary(&self) -> AuditSummary {
        AuditSummary {
            checks: self.entries.len(),
            violations: self.violations().len(),
            stages: self.entries.iter().map(|e| e.stage.clone()).collect(),
            feature_groups: self.feature_groups.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub checks: usize,
    pub violations: usize,
    pub stages: BTreeSet<String>,
    pub feature_groups: BTreeSet<String>,
}
