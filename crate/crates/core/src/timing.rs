//! Calendar timing of event-driven analyses.
//!
//! Patients enter uniformly within each accrual segment; event and dropout
//! times are independent exponentials, so the expected number of events by
//! calendar time `τ` has a closed form per segment and arm.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::design::BoundaryTable;
use crate::numerics::find_root;
use crate::{Error, Result};

/// Average month length used to map month offsets to calendar dates.
pub const DAYS_PER_MONTH: f64 = 365.25 / 12.0;

const MONTH_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccrualSegment {
    pub duration_months: f64,
    pub rate_per_month: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accrual {
    pub segments: Vec<AccrualSegment>,
}

impl Accrual {
    /// Constant rate until `n_total` patients are in.
    pub fn uniform(rate_per_month: f64, n_total: u32) -> Self {
        Self {
            segments: vec![AccrualSegment {
                duration_months: n_total as f64 / rate_per_month,
                rate_per_month,
            }],
        }
    }

    pub fn total(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.duration_months * s.rate_per_month)
            .sum()
    }

    /// Calendar month at which the last patient enters.
    pub fn end(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_months).sum()
    }

    /// Segments as `(start, end, rate)`.
    fn spans(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.segments.iter().scan(0.0, |start, s| {
            let begin = *start;
            *start += s.duration_months;
            Some((begin, *start, s.rate_per_month))
        })
    }

    /// Entry time of the patient at cumulative accrual fraction `u ∈ [0, 1]`.
    pub fn entry_time(&self, u: f64) -> f64 {
        let mut remaining = u.clamp(0.0, 1.0) * self.total();
        let mut last_end = 0.0;
        for (begin, end, rate) in self.spans() {
            let mass = (end - begin) * rate;
            if remaining <= mass && rate > 0.0 {
                return begin + remaining / rate;
            }
            remaining -= mass;
            last_end = end;
        }
        last_end
    }

    fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidModel("accrual needs at least one segment".into()));
        }
        for s in &self.segments {
            if !(s.duration_months > 0.0 && s.duration_months.is_finite())
                || !(s.rate_per_month >= 0.0 && s.rate_per_month.is_finite())
            {
                return Err(Error::InvalidModel(format!(
                    "accrual segment needs positive duration and nonnegative rate, got {s:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Accrual, survival and dropout assumptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialModel {
    pub accrual: Accrual,
    pub n_total: u32,
    #[serde(default = "one")]
    pub allocation_ratio: f64,
    pub median_survival_control: f64,
    pub median_survival_experimental: f64,
    #[serde(default)]
    pub annual_dropout_rate: f64,
}

fn one() -> f64 {
    1.0
}

impl TrialModel {
    pub fn new(
        accrual: Accrual,
        n_total: u32,
        allocation_ratio: f64,
        median_survival_control: f64,
        median_survival_experimental: f64,
        annual_dropout_rate: f64,
    ) -> Result<Self> {
        let model = Self {
            accrual,
            n_total,
            allocation_ratio,
            median_survival_control,
            median_survival_experimental,
            annual_dropout_rate,
        };
        model.validate()?;
        Ok(model)
    }

    /// 100 patients a month for 12 months, medians of 6 and 8 years,
    /// 2.5% yearly dropout.
    pub fn hypothetical_trial() -> Self {
        Self {
            accrual: Accrual::uniform(100.0, 1200),
            n_total: 1200,
            allocation_ratio: 1.0,
            median_survival_control: 72.0,
            median_survival_experimental: 96.0,
            annual_dropout_rate: 0.025,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.accrual.validate()?;
        if self.n_total == 0 {
            return Err(Error::InvalidModel("n_total must be positive".into()));
        }
        let total = self.accrual.total();
        if (total - self.n_total as f64).abs() > 1e-6 * self.n_total as f64 {
            return Err(Error::InvalidModel(format!(
                "accrual integrates to {total} patients, expected n_total = {}",
                self.n_total
            )));
        }
        if !(self.allocation_ratio > 0.0 && self.allocation_ratio.is_finite()) {
            return Err(Error::InvalidModel("allocation_ratio must be positive".into()));
        }
        for m in [self.median_survival_control, self.median_survival_experimental] {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::InvalidModel(format!("median survival must be positive, got {m}")));
            }
        }
        if !(0.0..1.0).contains(&self.annual_dropout_rate) {
            return Err(Error::InvalidModel(format!(
                "annual dropout rate must lie in [0, 1), got {}",
                self.annual_dropout_rate
            )));
        }
        Ok(())
    }

    pub fn hazard_control(&self) -> f64 {
        std::f64::consts::LN_2 / self.median_survival_control
    }

    pub fn hazard_experimental(&self) -> f64 {
        std::f64::consts::LN_2 / self.median_survival_experimental
    }

    /// Monthly dropout hazard from the annual dropout probability.
    pub fn dropout_hazard(&self) -> f64 {
        -(1.0 - self.annual_dropout_rate).ln() / 12.0
    }

    /// Share of patients randomised to the experimental arm.
    pub fn experimental_share(&self) -> f64 {
        self.allocation_ratio / (1.0 + self.allocation_ratio)
    }

    pub fn accrual_end(&self) -> f64 {
        self.accrual.end()
    }

    fn arms(&self) -> [(f64, f64); 2] {
        let share = self.experimental_share();
        [
            (1.0 - share, self.hazard_control()),
            (share, self.hazard_experimental()),
        ]
    }
}

fn arm_events(accrual: &Accrual, weight: f64, hazard: f64, dropout: f64, tau: f64) -> f64 {
    let h = hazard + dropout;
    let mut integral = 0.0;
    for (begin, end, rate) in accrual.spans() {
        if begin >= tau {
            break;
        }
        let stop = end.min(tau);
        // ∫_begin^stop (1 − e^{−h(τ−u)}) du
        let exposure = (stop - begin) - ((-h * (tau - stop)).exp() - (-h * (tau - begin)).exp()) / h;
        integral += rate * exposure;
    }
    weight * hazard / h * integral
}

/// Expected events per arm `[control, experimental]` by calendar month `tau`.
pub fn expected_events_by_arm(model: &TrialModel, tau: f64) -> [f64; 2] {
    if tau <= 0.0 {
        return [0.0, 0.0];
    }
    let eta = model.dropout_hazard();
    let [c, e] = model.arms();
    [
        arm_events(&model.accrual, c.0, c.1, eta, tau),
        arm_events(&model.accrual, e.0, e.1, eta, tau),
    ]
}

pub fn expected_events(model: &TrialModel, tau: f64) -> f64 {
    let [c, e] = expected_events_by_arm(model, tau);
    c + e
}

/// Expected events as `τ → ∞`.
pub fn asymptotic_events(model: &TrialModel) -> f64 {
    let eta = model.dropout_hazard();
    let n = model.accrual.total();
    model
        .arms()
        .iter()
        .map(|&(w, lambda)| n * w * lambda / (lambda + eta))
        .sum()
}

/// Calendar month at which `target` events are expected.
pub fn ccod_for_events(model: &TrialModel, target: u32) -> Result<f64> {
    if target == 0 {
        return Ok(0.0);
    }
    let asymptote = asymptotic_events(model);
    if target as f64 >= asymptote {
        return Err(Error::UnreachableTarget { target, asymptote });
    }
    let goal = target as f64;
    let mut hi = model.accrual_end().max(1.0);
    while expected_events(model, hi) < goal {
        hi *= 2.0;
    }
    find_root(|t| expected_events(model, t) - goal, 0.0, hi, MONTH_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowUp {
    pub months: f64,
    /// The cutoff precedes the end of accrual; `months` is reported as 0.
    pub before_accrual_end: bool,
}

/// Follow-up of the last patient randomised at a given cutoff.
pub fn minimal_follow_up(model: &TrialModel, ccod: f64) -> FollowUp {
    let gap = ccod - model.accrual_end();
    FollowUp {
        months: gap.max(0.0),
        before_accrual_end: gap < 0.0,
    }
}

/// Post-confirmatory analysis triggered by an event count or by everyone
/// reaching a minimum follow-up, whichever comes first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdatedAnalysisRule {
    #[serde(default = "updated_label")]
    pub label: String,
    pub target_events: u32,
    #[serde(default)]
    pub min_followup_months: Option<f64>,
}

fn updated_label() -> String {
    "Updated".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledAnalysis {
    pub label: String,
    pub target_events: u32,
    pub month: f64,
    pub minimal_followup_months: f64,
}

pub fn predicted_schedule(
    model: &TrialModel,
    table: &BoundaryTable,
    updated: Option<&UpdatedAnalysisRule>,
) -> Result<Vec<ScheduledAnalysis>> {
    let mut schedule = Vec::with_capacity(table.rows.len() + 1);
    for row in &table.rows {
        let month = ccod_for_events(model, row.target_events)?;
        schedule.push(ScheduledAnalysis {
            label: row.label.clone(),
            target_events: row.target_events,
            month,
            minimal_followup_months: minimal_follow_up(model, month).months,
        });
    }
    if let Some(rule) = updated {
        let by_events = ccod_for_events(model, rule.target_events).ok();
        let by_followup = rule.min_followup_months.map(|m| model.accrual_end() + m);
        let month = match (by_events, by_followup) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => {
                return Err(Error::UnreachableTarget {
                    target: rule.target_events,
                    asymptote: asymptotic_events(model),
                })
            }
        };
        schedule.push(ScheduledAnalysis {
            label: rule.label.clone(),
            target_events: rule.target_events,
            month,
            minimal_followup_months: minimal_follow_up(model, month).months,
        });
    }
    Ok(schedule)
}

/// Calendar date `months` after `start`, rounded to the nearest day.
pub fn month_offset_to_date(start: NaiveDate, months: f64) -> NaiveDate {
    start + Duration::days((months * DAYS_PER_MONTH).round() as i64)
}

/// Month offset of `date` after `start`.
pub fn date_to_month_offset(start: NaiveDate, date: NaiveDate) -> f64 {
    (date - start).num_days() as f64 / DAYS_PER_MONTH
}
