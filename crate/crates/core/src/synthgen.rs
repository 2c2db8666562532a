//! Seeded synthetic receivables generator with planted, recoverable structure.
//!
//! Generation runs payment-first. Weekly collections are a planted linear
//! combination of lagged support series (regime-specific for Q4 and non-Q4
//! weeks), scaled by holiday multipliers, plus Gaussian noise. Each week's
//! collections are split into invoices whose issue and due dates are derived
//! backwards from a payment date using the segment's payment terms and a
//! signed delay drawn from a normal distribution truncated at
//! `-payment_terms_days`. Open invoices arise only from truncating the
//! observation window.
//!
//! Random numbers come from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(config.seed)` and consumed as a single sequential stream, so
//! outputs are reproducible across platforms.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calendar::{FiscalCalendar, Week};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::invoice::{Invoice, Segment};
use crate::money::Money;
use crate::series::WeeklySeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub customers: u32,
    pub payment_terms_days: u32,
    pub mean_delay_days: f64,
    pub std_delay_days: f64,
    /// Overrides applied to payments falling in Q4 weeks.
    #[serde(default)]
    pub q4_mean_delay_days: Option<f64>,
    #[serde(default)]
    pub q4_std_delay_days: Option<f64>,
}

/// Per-regime `(lag_weeks, coefficient)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedLags {
    #[serde(default)]
    pub non_q4: Vec<(u32, f64)>,
    #[serde(default)]
    pub q4: Vec<(u32, f64)>,
}

impl PlantedLags {
    pub fn uniform(lags: Vec<(u32, f64)>) -> Self {
        PlantedLags {
            non_q4: lags.clone(),
            q4: lags,
        }
    }

    fn regime(&self, q4: bool) -> &[(u32, f64)] {
        if q4 {
            &self.q4
        } else {
            &self.non_q4
        }
    }

    pub fn max_lag(&self) -> u32 {
        self.non_q4.iter().chain(&self.q4).map(|l| l.0).max().unwrap_or(0)
    }
}

/// A support series: `max(0, level + trend·w + amplitude·sin(2πw/52))` scaled
/// by `(1 + noise_cv·z)` and rounded to whole units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportSpec {
    pub name: String,
    pub level: f64,
    #[serde(default)]
    pub trend_per_week: f64,
    #[serde(default)]
    pub yearly_amplitude: f64,
    #[serde(default)]
    pub noise_cv: f64,
    #[serde(default)]
    pub planted_lags: PlantedLags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolidaySpec {
    pub week: Week,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub fiscal_year_start: NaiveDate,
    /// Support-only weeks before the first collections week (covers lags).
    pub warmup_weeks: u32,
    /// Observed collection weeks.
    pub weeks: u32,
    /// Hidden weeks generated after the observation end; their payments make
    /// late invoices open.
    pub lookahead_weeks: u32,
    pub segments: BTreeMap<Segment, SegmentSpec>,
    /// Mean invoices per customer per week.
    pub invoice_rate: f64,
    /// Collections not explained by support.
    #[serde(default)]
    pub base_level: f64,
    pub support: Vec<SupportSpec>,
    #[serde(default)]
    pub holidays: Vec<HolidaySpec>,
    pub noise_std: f64,
}

impl Default for SynthConfig {
    /// The pinned configuration used by the acceptance suite.
    fn default() -> Self {
        let mut segments = BTreeMap::new();
        segments.insert(
            Segment::Csb,
            SegmentSpec {
                customers: 60,
                payment_terms_days: 15,
                mean_delay_days: 6.0,
                std_delay_days: 6.0,
                q4_mean_delay_days: Some(12.0),
                q4_std_delay_days: Some(8.0),
            },
        );
        segments.insert(
            Segment::Commercial,
            SegmentSpec {
                customers: 40,
                payment_terms_days: 30,
                mean_delay_days: 2.0,
                std_delay_days: 3.0,
                q4_mean_delay_days: Some(5.0),
                q4_std_delay_days: Some(4.0),
            },
        );
        segments.insert(
            Segment::Enterprise,
            SegmentSpec {
                customers: 20,
                payment_terms_days: 45,
                mean_delay_days: 10.0,
                std_delay_days: 8.0,
                q4_mean_delay_days: Some(18.0),
                q4_std_delay_days: Some(10.0),
            },
        );
        SynthConfig {
            seed: 7,
            fiscal_year_start: NaiveDate::from_ymd_opt(2021, 1, 4).expect("valid date"),
            warmup_weeks: 13,
            weeks: 156,
            lookahead_weeks: 26,
            segments,
            invoice_rate: 0.25,
            base_level: 100.0,
            support: vec![SupportSpec {
                name: "orders".into(),
                level: 100.0,
                trend_per_week: 0.2,
                yearly_amplitude: 10.0,
                noise_cv: 0.15,
                planted_lags: PlantedLags {
                    non_q4: vec![(3, 1.5)],
                    q4: vec![(2, 1.8)],
                },
            }],
            holidays: vec![
                HolidaySpec { week: 47, multiplier: 1.3 },
                HolidaySpec { week: 99, multiplier: 1.3 },
                HolidaySpec { week: 151, multiplier: 1.3 },
            ],
            noise_std: 5.0,
        }
    }
}

impl SynthConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn max_planted_lag(&self) -> u32 {
        self.support.iter().map(|s| s.planted_lags.max_lag()).max().unwrap_or(0)
    }

    pub fn calendar(&self) -> FiscalCalendar {
        FiscalCalendar::new(self.fiscal_year_start)
    }

    pub fn first_collection_week(&self) -> Week {
        self.warmup_weeks as Week + 1
    }

    pub fn observation_end_week(&self) -> Week {
        (self.warmup_weeks + self.weeks) as Week
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.segments.is_empty() {
            return err("at least one segment must be configured".into());
        }
        for (seg, s) in &self.segments {
            if s.customers == 0 {
                return err(format!("segment {seg}: customer count must be positive"));
            }
            let stds = [Some(s.std_delay_days), s.q4_std_delay_days];
            if stds.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return err(format!("segment {seg}: delay std must be finite and >= 0"));
            }
            let means = [Some(s.mean_delay_days), s.q4_mean_delay_days];
            if means.iter().flatten().any(|v| !v.is_finite()) {
                return err(format!("segment {seg}: delay mean must be finite"));
            }
        }
        if self.weeks == 0 {
            return err("weeks must be positive".into());
        }
        if !(self.invoice_rate.is_finite() && self.invoice_rate > 0.0) {
            return err("invoice_rate must be positive".into());
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return err("noise_std must be >= 0".into());
        }
        if !self.base_level.is_finite() {
            return err("base_level must be finite".into());
        }
        if self.support.is_empty() {
            return err("at least one support series is required".into());
        }
        for s in &self.support {
            let lags = s.planted_lags.non_q4.iter().chain(&s.planted_lags.q4);
            if lags.clone().any(|l| !l.1.is_finite()) {
                return err(format!("support {}: planted lag coefficients must be finite", s.name));
            }
            if ![s.level, s.trend_per_week, s.yearly_amplitude, s.noise_cv]
                .iter()
                .all(|v| v.is_finite())
                || s.noise_cv < 0.0
            {
                return err(format!("support {}: invalid shape parameters", s.name));
            }
        }
        for h in &self.holidays {
            if !(h.multiplier.is_finite() && h.multiplier > 0.0) {
                return err(format!("holiday week {}: multiplier must be > 0", h.week));
            }
        }
        let max_lag = self.max_planted_lag();
        if (self.weeks as u64) < max_lag as u64 + 10 {
            return err(format!(
                "weeks ({}) must be at least max planted lag + 10 ({})",
                self.weeks,
                max_lag + 10
            ));
        }
        if self.warmup_weeks < max_lag {
            return err(format!(
                "warmup_weeks ({}) must cover the max planted lag ({max_lag})",
                self.warmup_weeks
            ));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SynthConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Planted parameters and hidden outcomes, kept for test assertions only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub config: SynthConfig,
    pub observation_end_week: Week,
    /// Collections for every generated week, including hidden lookahead weeks.
    pub collections: WeeklySeries,
    /// Support series over the full generated span.
    pub support: BTreeMap<String, WeeklySeries>,
    /// True payment date of every invoice in the dataset, open ones included.
    pub payment_dates: BTreeMap<String, NaiveDate>,
}

struct Customer {
    id: String,
    segment: Segment,
}

pub fn generate(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let cal = config.calendar();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let total_weeks = (config.warmup_weeks + config.weeks + config.lookahead_weeks) as Week;
    let obs_end = config.observation_end_week();
    cal.check_week(total_weeks)?;

    let mut support_full = BTreeMap::new();
    for spec in &config.support {
        let values: Vec<f64> = (1..=total_weeks)
            .map(|w| {
                let t = w as f64;
                let base = spec.level
                    + spec.trend_per_week * t
                    + spec.yearly_amplitude * (2.0 * std::f64::consts::PI * t / 52.0).sin();
                let z: f64 = StandardNormal.sample(&mut rng);
                (base.max(0.0) * (1.0 + spec.noise_cv * z)).max(0.0).round()
            })
            .collect();
        support_full.insert(spec.name.clone(), WeeklySeries::new(1, values));
    }

    let customers: Vec<Customer> = config
        .segments
        .iter()
        .flat_map(|(&seg, spec)| {
            (1..=spec.customers).map(move |i| Customer {
                id: format!("C-{}-{:04}", seg.as_str().to_uppercase(), i),
                segment: seg,
            })
        })
        .collect();
    let arrivals = Poisson::new(config.invoice_rate * customers.len() as f64)
        .map_err(|e| Error::Config(format!("invoice rate: {e}")))?;
    let noise = Normal::new(0.0, config.noise_std).map_err(|e| Error::Config(e.to_string()))?;

    let mut collections = Vec::new();
    // (customer index, issue, due, amount, payment)
    let mut drafts: Vec<(usize, NaiveDate, NaiveDate, Money, NaiveDate)> = Vec::new();
    for w in config.first_collection_week()..=total_weeks {
        let q4 = FiscalCalendar::quarter_unchecked(w) == 4;
        let mut signal = config.base_level;
        for spec in &config.support {
            let s = &support_full[&spec.name];
            for &(lag, coef) in spec.planted_lags.regime(q4) {
                signal += coef * s.get(w - lag as Week).unwrap_or(0.0);
            }
        }
        let multiplier: f64 = config
            .holidays
            .iter()
            .filter(|h| h.week == w)
            .map(|h| h.multiplier)
            .product();
        let eps = if config.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        let total = Money::from_f64(signal * multiplier + eps).max(Money::from_cents(1));
        collections.push(total.to_f64());

        let drawn = arrivals.sample(&mut rng) as i64;
        let k = drawn.clamp(1, total.cents()) as usize;
        let weights: Vec<f64> = (0..k).map(|_| Exp1.sample(&mut rng)).collect();
        let amounts = split_cents(total.cents(), &weights);
        let week_start = cal.first_date_of(w)?;
        for cents in amounts {
            let ci = rng.random_range(0..customers.len());
            let seg = customers[ci].segment;
            let spec = &config.segments[&seg];
            let pay = week_start + Duration::days(rng.random_range(0..7));
            let (mean, std) = if q4 {
                (
                    spec.q4_mean_delay_days.unwrap_or(spec.mean_delay_days),
                    spec.q4_std_delay_days.unwrap_or(spec.std_delay_days),
                )
            } else {
                (spec.mean_delay_days, spec.std_delay_days)
            };
            let delay = truncated_delay(&mut rng, mean, std, spec.payment_terms_days);
            let terms = spec.payment_terms_days as i64;
            let mut due = pay - Duration::days(delay);
            let mut issue = due - Duration::days(terms);
            if issue < cal.fiscal_year_start {
                issue = cal.fiscal_year_start;
                due = issue + Duration::days(terms);
            }
            drafts.push((ci, issue, due, Money::from_cents(cents), pay));
        }
    }

    drafts.sort_by(|a, b| (a.1, a.4, &customers[a.0].id, a.3).cmp(&(b.1, b.4, &customers[b.0].id, b.3)));
    let obs_end_date = cal.last_date_of(obs_end)?;
    let mut invoices = Vec::new();
    let mut payment_dates = BTreeMap::new();
    for (ci, issue, due, amount, pay) in drafts {
        if issue > obs_end_date {
            continue;
        }
        let c = &customers[ci];
        let id = format!("INV-{:06}", invoices.len() + 1);
        let visible_payment = (pay <= obs_end_date).then_some(pay);
        payment_dates.insert(id.clone(), pay);
        invoices.push(Invoice::new(
            id,
            c.id.clone(),
            c.segment,
            issue,
            due,
            amount,
            visible_payment,
            config.segments[&c.segment].payment_terms_days,
        )?);
    }

    let support = support_full
        .iter()
        .map(|(k, s)| (k.clone(), s.truncate_after(obs_end)))
        .collect();
    Ok(Dataset {
        invoices,
        support,
        truth: Some(Truth {
            config: config.clone(),
            observation_end_week: obs_end,
            collections: WeeklySeries::new(config.first_collection_week(), collections),
            support: support_full,
            payment_dates,
        }),
    })
}

/// Splits `total` cents into `weights.len()` positive parts proportional to
/// the weights; remainders go to the largest fractional shares first.
fn split_cents(total: i64, weights: &[f64]) -> Vec<i64> {
    let k = weights.len() as i64;
    debug_assert!(total >= k);
    // Reserve one cent per part so every invoice amount is positive.
    let distributable = total - k;
    let sum: f64 = weights.iter().sum();
    let raw: Vec<f64> = weights.iter().map(|w| w / sum * distributable as f64).collect();
    let mut parts: Vec<i64> = raw.iter().map(|r| r.floor() as i64).collect();
    let mut rest = distributable - parts.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..parts.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest <= 0 {
            break;
        }
        parts[i] += 1;
        rest -= 1;
    }
    parts.iter().map(|p| p + 1).collect()
}

fn truncated_delay(rng: &mut ChaCha8Rng, mean: f64, std: f64, terms: u32) -> i64 {
    let floor = -(terms as f64);
    for _ in 0..64 {
        let z: f64 = StandardNormal.sample(rng);
        let d = mean + std * z;
        if d >= floor {
            return d.round() as i64;
        }
    }
    floor as i64
}

/// Writes `invoices.csv` and `support.csv` into `directory`.
pub fn export(dataset: &Dataset, directory: &Path, cal: &FiscalCalendar) -> Result<()> {
    std::fs::create_dir_all(directory)?;
    crate::io::write_invoices(&directory.join("invoices.csv"), &dataset.invoices)?;
    crate::io::write_support(&directory.join("support.csv"), &dataset.support, cal)?;
    Ok(())
}
