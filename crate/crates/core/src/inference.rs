//! Estimation after a group-sequential trial has stopped, under the
//! stagewise ordering of the sample space.
//!
//! Only efficacy looks enter the ordering; non-binding futility looks are
//! ignored. The bounds are those actually used at each look.

use serde::{Deserialize, Serialize};

use crate::design::information;
use crate::monitoring::{Decision, TrialCourse};
use crate::numerics::{
    expand_bracket, find_root, norm_quantile, DriftParameter, Quadrature, SubDensity,
};
use crate::numerics::recursion::check_information;
use crate::{Error, Result};

const THETA_BRACKET: (f64, f64) = (-2.0, 2.0);
const THETA_TOL: f64 = 1e-12;

/// Hazard-ratio point estimate with a two-sided interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrInterval {
    pub hr: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Naive Wald interval on the log hazard ratio.
pub fn naive_hr_ci(observed_hr: f64, events: f64, level: f64, allocation_ratio: f64) -> Result<HrInterval> {
    if !(observed_hr > 0.0) || !observed_hr.is_finite() {
        return Err(Error::Domain(format!("hazard ratio must be positive, got {observed_hr}")));
    }
    if !(events > 0.0) {
        return Err(Error::Domain(format!("events must be positive, got {events}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("level must lie in (0, 1), got {level}")));
    }
    if !(allocation_ratio > 0.0) {
        return Err(Error::Domain(format!("allocation ratio must be positive, got {allocation_ratio}")));
    }
    let se = 1.0 / information(events, allocation_ratio).sqrt();
    let half = norm_quantile(1.0 - level / 2.0)? * se;
    let log_hr = observed_hr.ln();
    Ok(HrInterval {
        hr: observed_hr,
        lower: (log_hr - half).exp(),
        upper: (log_hr + half).exp(),
    })
}

/// Efficacy-look history of a stopped trial up to and including the stop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppedTrialDatum {
    /// Information at each efficacy look.
    pub information: Vec<f64>,
    /// Efficacy z-bounds in force at each look.
    pub z_bounds: Vec<f64>,
    /// Zero-based index of the stopping look.
    pub stage: usize,
    pub z_obs: f64,
    pub events: u32,
    pub allocation_ratio: f64,
}

impl StoppedTrialDatum {
    /// `information` and `z_bounds` cover the looks up to and including `stage`.
    pub fn new(
        information: Vec<f64>,
        z_bounds: Vec<f64>,
        z_obs: f64,
        events: u32,
        allocation_ratio: f64,
    ) -> Result<Self> {
        let datum = Self {
            stage: information.len().saturating_sub(1),
            information,
            z_bounds,
            z_obs,
            events,
            allocation_ratio,
        };
        datum.validate()?;
        Ok(datum)
    }

    /// A trial with a single look at `events`.
    pub fn single_look(z_obs: f64, events: u32, allocation_ratio: f64) -> Result<Self> {
        let info = information(events as f64, allocation_ratio);
        Self::new(vec![info], vec![z_obs], z_obs, events, allocation_ratio)
    }

    /// The datum of a course that stopped for efficacy or reached its
    /// primary analysis.
    pub fn from_course(course: &TrialCourse) -> Result<Self> {
        let table = &course.boundary_table;
        let settling = course.settling_analysis().ok_or(Error::IncompleteCourse)?;
        if settling.decision == Some(Decision::StopFutility) {
            return Err(Error::Contract(
                "adjusted estimation after a futility stop is not supported".into(),
            ));
        }
        let mut info = Vec::new();
        let mut bounds = Vec::new();
        for a in course.analyses.iter().filter(|a| !a.is_update()) {
            if let Some(b) = a.recalculated {
                info.push(table.info(a.observed_events as f64));
                bounds.push(b.z);
            }
            if a.label == settling.label {
                break;
            }
        }
        Self::new(
            info,
            bounds,
            settling.observed_z,
            settling.observed_events,
            table.allocation_ratio,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.information.is_empty() || self.information.len() != self.z_bounds.len() {
            return Err(Error::Domain(format!(
                "need one bound per look: {} looks, {} bounds",
                self.information.len(),
                self.z_bounds.len()
            )));
        }
        if self.stage != self.information.len() - 1 {
            return Err(Error::Domain(format!(
                "stopping stage {} must be the last of {} looks",
                self.stage,
                self.information.len()
            )));
        }
        check_information(&self.information)?;
        if !self.z_obs.is_finite() || self.z_bounds.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain("z statistics and bounds must be finite".into()));
        }
        Ok(())
    }

    fn stopped_early(&self) -> bool {
        self.z_obs >= self.z_bounds[self.stage]
    }
}

/// P_θ(an outcome at least as extreme as the observed one) under the
/// stagewise ordering: an efficacy exit at an earlier look, or reaching the
/// stopping look with `Z ≥ z_obs`. Increasing in θ.
pub fn stagewise_p(datum: &StoppedTrialDatum, theta: f64) -> Result<f64> {
    stagewise_p_with(datum, theta, Quadrature::default())
}

pub fn stagewise_p_with(datum: &StoppedTrialDatum, theta: f64, quad: Quadrature) -> Result<f64> {
    let drift = DriftParameter::new(theta);
    let mut density = SubDensity::origin();
    let mut p = 0.0;
    for k in 0..datum.stage {
        let info = datum.information[k];
        let bound = datum.z_bounds[k];
        p += density.upper_tail(info, drift, bound)?;
        density = density.advance(info, drift, f64::NEG_INFINITY, bound, quad)?;
    }
    p += density.upper_tail(datum.information[datum.stage], drift, datum.z_obs)?;
    Ok(p.clamp(0.0, 1.0))
}

fn solve_theta(datum: &StoppedTrialDatum, target: f64) -> Result<f64> {
    let f = |theta: f64| stagewise_p(datum, theta).map_or(f64::NAN, |p| p - target);
    let (lo, hi) = expand_bracket(f, THETA_BRACKET.0, THETA_BRACKET.1, 8)?;
    find_root(f, lo, hi, THETA_TOL)
}

/// Median-unbiased hazard ratio: `exp(−θ)` where the stagewise p equals 1/2.
pub fn median_unbiased_hr(datum: &StoppedTrialDatum) -> Result<f64> {
    Ok((-solve_theta(datum, 0.5)?).exp())
}

/// Adjusted two-sided interval for the hazard ratio as `(lower, upper)`.
pub fn adjusted_ci(datum: &StoppedTrialDatum, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("level must lie in (0, 1), got {level}")));
    }
    let theta_hi = solve_theta(datum, 1.0 - level / 2.0)?;
    let theta_lo = solve_theta(datum, level / 2.0)?;
    Ok(((-theta_hi).exp(), (-theta_lo).exp()))
}

/// Naive and adjusted estimates of a stopped trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppedTrialEstimates {
    pub level: f64,
    pub naive: HrInterval,
    pub adjusted: HrInterval,
    /// Whether the observed statistic crossed the bound at the stopping look.
    pub crossed: bool,
}

pub fn estimate(datum: &StoppedTrialDatum, level: f64) -> Result<StoppedTrialEstimates> {
    datum.validate()?;
    let info = datum.information[datum.stage];
    let naive_hr = (-datum.z_obs / info.sqrt()).exp();
    let events = datum.events as f64;
    let naive = naive_hr_ci(naive_hr, events, level, datum.allocation_ratio)?;
    let (lower, upper) = adjusted_ci(datum, level)?;
    Ok(StoppedTrialEstimates {
        level,
        naive,
        adjusted: HrInterval {
            hr: median_unbiased_hr(datum)?,
            lower,
            upper,
        },
        crossed: datum.stopped_early(),
    })
}
