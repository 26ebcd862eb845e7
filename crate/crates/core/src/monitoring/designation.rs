use std::fmt;

use serde::{Deserialize, Serialize};

use crate::monitoring::course::{HypothesisState, TrialCourse};
use crate::{Error, Result};

/// Reporting-stage name of a design-stage analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportingLabel {
    FutilityAnalysis,
    ConfirmatoryAnalysis,
    UpdatedAnalysis,
    NotConducted,
    /// Conducted before the settling analysis; it carries no reporting name.
    NoReportingRole,
}

impl ReportingLabel {
    /// Whether the label names an analysis in a report.
    pub fn is_named(self) -> bool {
        matches!(
            self,
            Self::FutilityAnalysis | Self::ConfirmatoryAnalysis | Self::UpdatedAnalysis
        )
    }
}

impl fmt::Display for ReportingLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FutilityAnalysis => "futility analysis",
            Self::ConfirmatoryAnalysis => "confirmatory analysis",
            Self::UpdatedAnalysis => "updated analysis",
            Self::NotConducted => "not conducted",
            Self::NoReportingRole => "",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignationEntry {
    /// Design-stage label.
    pub label: String,
    pub reporting_label: ReportingLabel,
    pub conducted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Designation {
    pub entries: Vec<DesignationEntry>,
    /// Design-stage label of the decisive analysis.
    pub decisive: Option<String>,
}

impl Designation {
    pub fn get(&self, label: &str) -> Option<&DesignationEntry> {
        self.entries.iter().find(|e| e.label == label)
    }

    pub fn reporting_label(&self, label: &str) -> Option<ReportingLabel> {
        self.get(label).map(|e| e.reporting_label)
    }

    pub fn confirmatory(&self) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.reporting_label == ReportingLabel::ConfirmatoryAnalysis)
            .map(|e| e.label.as_str())
    }

    /// Move the decisive flag. The target must be a conducted confirmatory
    /// or updated analysis.
    pub fn mark_decisive(&self, label: &str) -> Result<Designation> {
        let entry = self.get(label).ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        let eligible = matches!(
            entry.reporting_label,
            ReportingLabel::ConfirmatoryAnalysis | ReportingLabel::UpdatedAnalysis
        );
        if !eligible || !entry.conducted {
            return Err(Error::Contract(format!(
                "`{label}` ({}) cannot be decisive; only a conducted confirmatory or updated analysis can",
                describe(entry)
            )));
        }
        let mut next = self.clone();
        next.decisive = Some(label.to_string());
        Ok(next)
    }
}

fn describe(entry: &DesignationEntry) -> String {
    match (entry.reporting_label, entry.conducted) {
        (ReportingLabel::NoReportingRole, _) => "no reporting role".into(),
        (l, true) => l.to_string(),
        (l, false) => format!("{l}, not yet conducted"),
    }
}

/// Reporting-stage designations of a settled course.
pub fn designate(course: &TrialCourse) -> Result<Designation> {
    if course.is_open() {
        return Err(Error::IncompleteCourse);
    }
    Ok(designate_partial(course))
}

/// Designations of a course that may still be open. Open courses get
/// `NoReportingRole` for conducted and `NotConducted` for remaining analyses.
pub fn designate_partial(course: &TrialCourse) -> Designation {
    let conducted = |label: &str| course.analysis(label).is_some();
    let table = &course.boundary_table;
    let settling = course
        .settling_analysis()
        .and_then(|a| table.index_of(&a.label).ok());
    let futility_stop = course.hypothesis_state == HypothesisState::AbandonedFutility;
    let primary_index = table.rows.len() - 1;

    let mut entries: Vec<DesignationEntry> = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let done = conducted(&row.label);
            let reporting_label = match settling {
                None if done => ReportingLabel::NoReportingRole,
                None => ReportingLabel::NotConducted,
                Some(s) if i < s && done => ReportingLabel::NoReportingRole,
                Some(s) if i < s => ReportingLabel::NotConducted,
                Some(s) if i == s && futility_stop => ReportingLabel::FutilityAnalysis,
                Some(s) if i == s => ReportingLabel::ConfirmatoryAnalysis,
                Some(_) if done => ReportingLabel::UpdatedAnalysis,
                // After a futility stop the analysis at primary timing still runs, as an update.
                Some(_) if futility_stop && i == primary_index => ReportingLabel::UpdatedAnalysis,
                Some(_) => ReportingLabel::NotConducted,
            };
            DesignationEntry {
                label: row.label.clone(),
                reporting_label,
                conducted: done,
            }
        })
        .collect();

    for label in &course.updated_analyses {
        if table.index_of(label).is_ok() {
            continue;
        }
        let done = conducted(label);
        let reporting_label = match settling {
            None => ReportingLabel::NotConducted,
            Some(_) if done => ReportingLabel::UpdatedAnalysis,
            // No further update after the primary-time update that follows a futility stop.
            Some(_) if futility_stop => ReportingLabel::NotConducted,
            Some(_) => ReportingLabel::UpdatedAnalysis,
        };
        entries.push(DesignationEntry {
            label: label.clone(),
            reporting_label,
            conducted: done,
        });
    }

    for a in &course.analyses {
        if entries.iter().all(|e| e.label != a.label) {
            entries.push(DesignationEntry {
                label: a.label.clone(),
                reporting_label: ReportingLabel::UpdatedAnalysis,
                conducted: true,
            });
        }
    }

    let decisive = entries
        .iter()
        .find(|e| e.reporting_label == ReportingLabel::ConfirmatoryAnalysis)
        .map(|e| e.label.clone());
    Designation { entries, decisive }
}
