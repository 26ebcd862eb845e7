//! JSON configuration document. Unknown keys are rejected everywhere; the
//! published schema lives in `configs/config.schema.json`.

use std::path::Path;

use chrono::NaiveDate;
use gsd_core::design::{
    compute_boundaries, required_max_events_with, AnalysisPlan, BoundaryTable, DesignSpec,
    SpendingFamily,
};
use gsd_core::timing::{Accrual, AccrualSegment, TrialModel, UpdatedAnalysisRule};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub design: DesignSection,
    pub enrollment: EnrollmentSection,
    pub survival: SurvivalSection,
    #[serde(default)]
    pub dropout: DropoutSection,
    #[serde(default)]
    pub updated_analysis: Option<UpdatedAnalysisRule>,
    #[serde(default)]
    pub reporting: ReportingSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub alpha_one_sided: f64,
    pub power: f64,
    pub hr_alternative: f64,
    #[serde(default = "one")]
    pub allocation_ratio: f64,
    #[serde(default)]
    pub spending: SpendingFamily,
    #[serde(default)]
    pub binding_futility: bool,
    /// Fixes the event count instead of sizing for `power`.
    #[serde(default)]
    pub max_events: Option<u32>,
    /// Size with futility honoured, compensating its power loss.
    #[serde(default)]
    pub compensate_futility: bool,
    pub analyses: Vec<AnalysisSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub label: String,
    pub information_fraction: f64,
    #[serde(default)]
    pub efficacy: bool,
    #[serde(default)]
    pub futility_hr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnrollmentSection {
    pub n_total: u32,
    #[serde(default)]
    pub rate_per_month: Option<f64>,
    #[serde(default)]
    pub piecewise: Option<Vec<AccrualSegment>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurvivalSection {
    pub median_control_months: f64,
    pub median_experimental_months: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutSection {
    #[serde(default)]
    pub annual_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportingSection {
    #[serde(default)]
    pub first_patient_in_date: Option<NaiveDate>,
    #[serde(default = "six")]
    pub ssd_lag_weeks: u32,
    #[serde(default = "yes")]
    pub two_sided_presentation: bool,
    #[serde(default = "endpoint")]
    pub endpoint: String,
}

impl Default for ReportingSection {
    fn default() -> Self {
        Self {
            first_patient_in_date: None,
            ssd_lag_weeks: six(),
            two_sided_presentation: yes(),
            endpoint: endpoint(),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn six() -> u32 {
    6
}

fn yes() -> bool {
    true
}

fn endpoint() -> String {
    "primary endpoint".to_string()
}

impl ConfigDocument {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let doc: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.design_spec().validate().map_err(config_error)?;
        self.model()?;
        if let Some(u) = &self.updated_analysis {
            if self.design.analyses.iter().any(|a| a.label == u.label) {
                return Err(CliError::Config(format!(
                    "updated analysis label `{}` repeats a planned analysis",
                    u.label
                )));
            }
        }
        Ok(())
    }

    pub fn design_spec(&self) -> DesignSpec {
        let d = &self.design;
        DesignSpec {
            alpha_one_sided: d.alpha_one_sided,
            power_target: d.power,
            hr_alternative: d.hr_alternative,
            allocation_ratio: d.allocation_ratio,
            spending_family: d.spending,
            binding_futility: d.binding_futility,
            analyses: d
                .analyses
                .iter()
                .map(|a| AnalysisPlan {
                    label: a.label.clone(),
                    information_fraction: a.information_fraction,
                    efficacy: a.efficacy,
                    futility_hr_threshold: a.futility_hr,
                })
                .collect(),
        }
    }

    pub fn model(&self) -> Result<TrialModel, CliError> {
        let e = &self.enrollment;
        let accrual = match (e.rate_per_month, &e.piecewise) {
            (Some(rate), None) => Accrual::uniform(rate, e.n_total),
            (None, Some(segments)) => Accrual { segments: segments.clone() },
            _ => {
                return Err(CliError::Config(
                    "enrollment needs exactly one of `rate_per_month` or `piecewise`".into(),
                ))
            }
        };
        TrialModel::new(
            accrual,
            e.n_total,
            self.design.allocation_ratio,
            self.survival.median_control_months,
            self.survival.median_experimental_months,
            self.dropout.annual_rate,
        )
        .map_err(config_error)
    }

    /// Boundary table at the configured or required number of events.
    pub fn boundary_table(&self) -> Result<BoundaryTable, CliError> {
        let spec = self.design_spec();
        let max = match self.design.max_events {
            Some(m) => m,
            None => required_max_events_with(&spec, self.design.compensate_futility)?,
        };
        Ok(compute_boundaries(&spec, max)?)
    }

    pub fn updated_labels(&self) -> Vec<String> {
        self.updated_analysis.iter().map(|u| u.label.clone()).collect()
    }
}

fn config_error(e: gsd_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Boundary table written by `design`, re-read without re-derivation.
pub fn load_table(path: &Path) -> Result<BoundaryTable, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
