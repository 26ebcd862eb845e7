use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::design::{hr_to_z, z_to_hr, BoundaryTable, DesignSpec};
use crate::monitoring::designation::{designate, Designation};
use crate::monitoring::recalc::{
    recalc_interim_level, recalc_primary_level, ConductedLook, RecalculatedBound,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Continue,
    StopFutility,
    StopEfficacy,
    ReachPrimary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisState {
    Open,
    Rejected,
    RetainedAtPrimary,
    AbandonedFutility,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Continue => "continue",
            Self::StopFutility => "stop_futility",
            Self::StopEfficacy => "stop_efficacy",
            Self::ReachPrimary => "reach_primary",
        })
    }
}

impl fmt::Display for HypothesisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Open => "open",
            Self::Rejected => "rejected",
            Self::RetainedAtPrimary => "retained_at_primary",
            Self::AbandonedFutility => "abandoned_futility",
        })
    }
}

/// Outcome of applying the decision rules at one analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// What the rules recommend. Futility is non-binding: a `StopFutility`
    /// recommendation may be overruled by the sponsor.
    pub recommendation: Decision,
    /// The null hypothesis is rejected at this analysis.
    pub rejected: bool,
    pub futility_met: bool,
    pub bound: Option<RecalculatedBound>,
}

/// Apply efficacy and futility rules at `plan_label`.
///
/// `bound` is the efficacy bound in force (recalculated for the observed
/// event count); it is required at efficacy analyses.
pub fn evaluate_decision(
    table: &BoundaryTable,
    bound: Option<&RecalculatedBound>,
    observed_hr: f64,
    observed_z: f64,
    plan_label: &str,
) -> Result<Evaluation> {
    let row = table.row(plan_label)?;
    if row.efficacy && bound.is_none() {
        return Err(Error::Contract(format!(
            "efficacy analysis `{plan_label}` needs its recalculated bound"
        )));
    }
    let rejected = row.efficacy && bound.is_some_and(|b| observed_z >= b.z);
    let futility_met = row
        .futility_hr_bound
        .is_some_and(|thr| observed_hr >= thr);

    let recommendation = if table.is_primary(plan_label) {
        Decision::ReachPrimary
    } else if rejected {
        Decision::StopEfficacy
    } else if futility_met {
        Decision::StopFutility
    } else {
        Decision::Continue
    };
    Ok(Evaluation {
        recommendation,
        rejected,
        futility_met,
        bound: bound.copied(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservedEffect {
    HazardRatio(f64),
    Z(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Purpose {
    /// A pre-planned analysis that evaluates the hypothesis.
    #[default]
    Test,
    /// Estimation only, after the hypothesis is settled.
    Update,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FutilityAction {
    #[default]
    Follow,
    Overrule,
}

/// A request to append a conducted analysis to a course.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisRecord {
    pub label: String,
    pub ccod: NaiveDate,
    pub ssd: NaiveDate,
    pub observed_events: u32,
    pub effect: ObservedEffect,
    pub purpose: Purpose,
    pub futility_action: FutilityAction,
    /// The analysis was postponed on purpose after a failed interim.
    pub deliberately_delayed: bool,
    pub pipeline_events: Option<u32>,
}

impl AnalysisRecord {
    pub fn new(
        label: impl Into<String>,
        ccod: NaiveDate,
        ssd: NaiveDate,
        observed_events: u32,
        effect: ObservedEffect,
    ) -> Self {
        Self {
            label: label.into(),
            ccod,
            ssd,
            observed_events,
            effect,
            purpose: Purpose::Test,
            futility_action: FutilityAction::Follow,
            deliberately_delayed: false,
            pipeline_events: None,
        }
    }

    pub fn update(mut self) -> Self {
        self.purpose = Purpose::Update;
        self
    }

    pub fn overrule_futility(mut self) -> Self {
        self.futility_action = FutilityAction::Overrule;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedAnalysis {
    pub label: String,
    pub ccod: NaiveDate,
    pub ssd: NaiveDate,
    pub observed_events: u32,
    pub observed_hr: f64,
    pub observed_z: f64,
    pub recalculated: Option<RecalculatedBound>,
    /// `None` for updated analyses, which evaluate nothing.
    pub decision: Option<Decision>,
    #[serde(default)]
    pub futility_recommended: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline_events: Option<u32>,
}

impl ObservedAnalysis {
    pub fn is_update(&self) -> bool {
        self.decision.is_none()
    }
}

fn default_endpoint() -> String {
    "primary endpoint".to_string()
}

/// Log of a live trial for one hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialCourse {
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
    pub design: DesignSpec,
    pub boundary_table: BoundaryTable,
    /// Design-stage labels of analyses planned after the confirmatory one.
    #[serde(default)]
    pub updated_analyses: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_patient_in: Option<NaiveDate>,
    pub analyses: Vec<ObservedAnalysis>,
    pub hypothesis_state: HypothesisState,
    pub designations: Option<Designation>,
}

impl TrialCourse {
    pub fn new(design: DesignSpec, boundary_table: BoundaryTable) -> Result<Self> {
        design.validate()?;
        if design.analyses.len() != boundary_table.rows.len()
            || design
                .analyses
                .iter()
                .zip(&boundary_table.rows)
                .any(|(p, r)| p.label != r.label)
        {
            return Err(Error::InvalidDesign(
                "boundary table does not match the design's analyses".into(),
            ));
        }
        Ok(Self {
            endpoint: default_endpoint(),
            design,
            boundary_table,
            updated_analyses: Vec::new(),
            first_patient_in: None,
            analyses: Vec::new(),
            hypothesis_state: HypothesisState::Open,
            designations: None,
        })
    }

    pub fn with_updated_analyses(mut self, labels: Vec<String>) -> Self {
        self.updated_analyses = labels;
        self
    }

    pub fn with_first_patient_in(mut self, date: NaiveDate) -> Self {
        self.first_patient_in = Some(date);
        self
    }

    pub fn is_open(&self) -> bool {
        self.hypothesis_state == HypothesisState::Open
    }

    pub fn analysis(&self, label: &str) -> Option<&ObservedAnalysis> {
        self.analyses.iter().find(|a| a.label == label)
    }

    /// The analysis that settled the hypothesis, if any.
    pub fn settling_analysis(&self) -> Option<&ObservedAnalysis> {
        self.analyses.iter().find(|a| {
            matches!(
                a.decision,
                Some(Decision::StopEfficacy | Decision::StopFutility | Decision::ReachPrimary)
            )
        })
    }

    /// Looks that enter the null exit computation, with the bounds actually
    /// used. Futility-only looks count only under binding futility.
    pub fn efficacy_history(&self) -> Vec<ConductedLook> {
        let table = &self.boundary_table;
        self.analyses
            .iter()
            .filter(|a| !a.is_update())
            .filter_map(|a| {
                let row = table.row(&a.label).ok()?;
                let z_bound = match a.recalculated {
                    Some(b) => b.z,
                    None if table.binding_futility => f64::INFINITY,
                    None => return None,
                };
                let futility = row.futility_hr_bound.and_then(|thr| {
                    hr_to_z(thr, a.observed_events as f64, table.allocation_ratio).ok()
                });
                Some(ConductedLook {
                    events: a.observed_events,
                    z_bound,
                    futility_z_bound: futility,
                })
            })
            .collect()
    }

    /// Append a conducted analysis; returns the new course and, for testing
    /// analyses, the evaluation.
    pub fn record(&self, rec: AnalysisRecord) -> Result<(TrialCourse, Option<Evaluation>)> {
        if rec.ssd < rec.ccod {
            return Err(Error::Contract(format!(
                "snapshot date {} precedes the cutoff {}",
                rec.ssd, rec.ccod
            )));
        }
        if rec.observed_events == 0 {
            return Err(Error::Contract("an analysis needs at least one observed event".into()));
        }
        if self.analysis(&rec.label).is_some() {
            return Err(Error::Contract(format!("analysis `{}` is already recorded", rec.label)));
        }
        if let Some(prev) = self.analyses.last() {
            if rec.ccod < prev.ccod {
                return Err(Error::Contract(format!(
                    "cutoff {} precedes the previous analysis cutoff {}",
                    rec.ccod, prev.ccod
                )));
            }
        }
        let ratio = self.boundary_table.allocation_ratio;
        let events = rec.observed_events as f64;
        let (hr, z) = match rec.effect {
            ObservedEffect::HazardRatio(hr) => (hr, hr_to_z(hr, events, ratio)?),
            ObservedEffect::Z(z) => (z_to_hr(z, events, ratio)?, z),
        };

        match (rec.purpose, self.is_open()) {
            (Purpose::Test, true) => self.record_test(rec, hr, z),
            (Purpose::Update, false) => {
                let mut next = self.clone();
                next.analyses.push(ObservedAnalysis {
                    label: rec.label,
                    ccod: rec.ccod,
                    ssd: rec.ssd,
                    observed_events: rec.observed_events,
                    observed_hr: hr,
                    observed_z: z,
                    recalculated: None,
                    decision: None,
                    futility_recommended: false,
                    pipeline_events: rec.pipeline_events,
                });
                next.refresh_designations()?;
                Ok((next, None))
            }
            (Purpose::Test, false) => Err(Error::Contract(format!(
                "the hypothesis is already settled ({}); a null hypothesis is tested to a decision only once, so `{}` can only be an updated analysis",
                self.hypothesis_state, rec.label
            ))),
            (Purpose::Update, true) => Err(Error::Contract(format!(
                "`{}` cannot be an updated analysis while the hypothesis is still open",
                rec.label
            ))),
        }
    }

    fn record_test(
        &self,
        rec: AnalysisRecord,
        hr: f64,
        z: f64,
    ) -> Result<(TrialCourse, Option<Evaluation>)> {
        let table = &self.boundary_table;
        let index = table.index_of(&rec.label)?;
        let row = &table.rows[index];
        if let Some(last) = self.analyses.last() {
            let last_index = table.index_of(&last.label)?;
            if index <= last_index {
                return Err(Error::Contract(format!(
                    "`{}` is planned before the already conducted `{}`",
                    rec.label, last.label
                )));
            }
            if rec.observed_events <= last.observed_events {
                return Err(Error::Contract(format!(
                    "{} events does not exceed the {} events of `{}`",
                    rec.observed_events, last.observed_events, last.label
                )));
            }
        }

        let is_primary = table.is_primary(&rec.label);
        let history = self.efficacy_history();
        let bound = if is_primary {
            if rec.deliberately_delayed {
                return Err(Error::Contract(
                    "the primary analysis was deliberately delayed after a failed interim; \
                     that amounts to an unplanned sample-size re-estimation and inflates the type I error"
                        .into(),
                ));
            }
            Some(recalc_primary_level(table, &history, rec.observed_events)?)
        } else {
            if rec.observed_events >= table.max_events {
                return Err(Error::Contract(format!(
                    "interim `{}` at {} events reaches the primary target of {}",
                    rec.label, rec.observed_events, table.max_events
                )));
            }
            if row.efficacy {
                Some(recalc_interim_level(table, &rec.label, rec.observed_events, &history)?)
            } else {
                None
            }
        };

        let eval = evaluate_decision(table, bound.as_ref(), hr, z, &rec.label)?;
        let (decision, state) = match eval.recommendation {
            Decision::StopEfficacy => (Decision::StopEfficacy, HypothesisState::Rejected),
            Decision::ReachPrimary if eval.rejected => {
                (Decision::ReachPrimary, HypothesisState::Rejected)
            }
            Decision::ReachPrimary => (Decision::ReachPrimary, HypothesisState::RetainedAtPrimary),
            Decision::StopFutility => match rec.futility_action {
                FutilityAction::Follow => (Decision::StopFutility, HypothesisState::AbandonedFutility),
                FutilityAction::Overrule if table.binding_futility => {
                    return Err(Error::Contract(format!(
                        "futility at `{}` is binding; overruling it would inflate the type I error",
                        rec.label
                    )))
                }
                FutilityAction::Overrule => (Decision::Continue, HypothesisState::Open),
            },
            Decision::Continue => (Decision::Continue, HypothesisState::Open),
        };

        let mut next = self.clone();
        next.analyses.push(ObservedAnalysis {
            label: rec.label,
            ccod: rec.ccod,
            ssd: rec.ssd,
            observed_events: rec.observed_events,
            observed_hr: hr,
            observed_z: z,
            recalculated: bound,
            decision: Some(decision),
            futility_recommended: eval.futility_met && !is_primary,
            pipeline_events: rec.pipeline_events,
        });
        next.hypothesis_state = state;
        next.refresh_designations()?;
        Ok((next, Some(eval)))
    }

    fn refresh_designations(&mut self) -> Result<()> {
        if self.is_open() {
            self.designations = None;
            return Ok(());
        }
        let previous = self.designations.take();
        let mut fresh = designate(self)?;
        if let Some(label) = previous.and_then(|d| d.decisive) {
            if let Ok(moved) = fresh.mark_decisive(&label) {
                fresh = moved;
            }
        }
        self.designations = Some(fresh);
        Ok(())
    }

    /// Move the decisive flag to `label`.
    pub fn mark_decisive(&self, label: &str) -> Result<TrialCourse> {
        let current = match &self.designations {
            Some(d) => d.clone(),
            None => designate(self)?,
        };
        let mut next = self.clone();
        next.designations = Some(current.mark_decisive(label)?);
        Ok(next)
    }

    /// Check the invariants of a deserialised course.
    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        let efficacy_stops = self
            .analyses
            .iter()
            .filter(|a| a.decision == Some(Decision::StopEfficacy))
            .count();
        if efficacy_stops > 1 {
            return Err(Error::Contract("a null hypothesis can only be rejected once".into()));
        }
        let mut settled = false;
        for a in &self.analyses {
            if a.ssd < a.ccod {
                return Err(Error::Contract(format!("`{}`: snapshot precedes cutoff", a.label)));
            }
            if settled && !a.is_update() {
                return Err(Error::Contract(format!(
                    "`{}` evaluates the hypothesis after it was settled",
                    a.label
                )));
            }
            if matches!(
                a.decision,
                Some(Decision::StopEfficacy | Decision::StopFutility | Decision::ReachPrimary)
            ) {
                settled = true;
            }
        }
        if settled == self.is_open() {
            return Err(Error::Contract(format!(
                "hypothesis state {} disagrees with the recorded decisions",
                self.hypothesis_state
            )));
        }
        Ok(())
    }
}
