//! Boundary recalculation for over- and underrunning.
//!
//! Interim analyses respend alpha at the observed information fraction
//! `d_obs / d_max`. At the primary analysis the information fractions are
//! taken relative to the observed final count and the last bound is solved
//! from whatever alpha the frozen earlier bounds actually spent.

use serde::{Deserialize, Serialize};

use crate::design::{information, solve_upper_bound, z_to_hr, BoundaryTable};
use crate::numerics::{norm_quantile, norm_sf, DriftParameter, Quadrature, SubDensity};
use crate::{Error, Result};

/// An efficacy look that has already been conducted; its bound is frozen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConductedLook {
    pub events: u32,
    pub z_bound: f64,
    /// Binding futility bound in force at this look, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub futility_z_bound: Option<f64>,
}

impl ConductedLook {
    pub fn new(events: u32, z_bound: f64) -> Self {
        Self {
            events,
            z_bound,
            futility_z_bound: None,
        }
    }

    /// Reconstruct from the one-sided nominal level that was used.
    pub fn from_nominal_level(events: u32, nominal_level_one_sided: f64) -> Result<Self> {
        Ok(Self::new(events, norm_quantile(1.0 - nominal_level_one_sided)?))
    }
}

/// Bounds in force at an analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecalculatedBound {
    #[serde(rename = "alpha_1sided")]
    pub nominal_level_one_sided: f64,
    pub z: f64,
    pub hr: f64,
}

impl RecalculatedBound {
    fn from_z(z: f64, events: u32, allocation_ratio: f64) -> Result<Self> {
        Ok(Self {
            nominal_level_one_sided: norm_sf(z),
            z,
            hr: z_to_hr(z, events as f64, allocation_ratio)?,
        })
    }

    pub fn nominal_level_two_sided(&self) -> f64 {
        2.0 * self.nominal_level_one_sided
    }
}

/// Null sub-density after the frozen history, plus the alpha it spent.
fn replay_history(table: &BoundaryTable, history: &[ConductedLook]) -> Result<(SubDensity, f64)> {
    let quad = Quadrature::default();
    let mut density = SubDensity::origin();
    let mut spent = 0.0;
    let mut prev = 0;
    for look in history {
        if look.events <= prev {
            return Err(Error::Contract(format!(
                "conducted analyses must have increasing event counts ({} after {prev})",
                look.events
            )));
        }
        prev = look.events;
        let info = table.info(look.events as f64);
        let lower = if table.binding_futility {
            look.futility_z_bound.unwrap_or(f64::NEG_INFINITY)
        } else {
            f64::NEG_INFINITY
        };
        spent += density.upper_tail(info, DriftParameter::NULL, look.z_bound)?;
        density = density.advance(info, DriftParameter::NULL, lower, look.z_bound, quad)?;
    }
    Ok((density, spent))
}

/// Bound for an efficacy interim conducted at `observed_events`.
///
/// `history` lists earlier efficacy looks with the bounds actually used.
pub fn recalc_interim_level(
    table: &BoundaryTable,
    plan_label: &str,
    observed_events: u32,
    history: &[ConductedLook],
) -> Result<RecalculatedBound> {
    let row = table.row(plan_label)?;
    if !row.efficacy {
        return Err(Error::Contract(format!(
            "`{plan_label}` has no efficacy role; futility-only analyses spend no alpha"
        )));
    }
    if table.is_primary(plan_label) {
        return Err(Error::Contract(format!(
            "`{plan_label}` is the primary analysis; use the primary recalculation"
        )));
    }
    if observed_events == 0 {
        return Err(Error::Domain("an analysis needs at least one event".into()));
    }
    if observed_events >= table.max_events {
        return Err(Error::Contract(format!(
            "{observed_events} events reaches the target of {}; that is primary-analysis territory",
            table.max_events
        )));
    }
    if let Some(last) = history.last() {
        if observed_events <= last.events {
            return Err(Error::Contract(format!(
                "{observed_events} events does not exceed the previous analysis at {}",
                last.events
            )));
        }
    }

    // Unchanged counts reproduce the planned row exactly.
    let planned_history = table
        .rows
        .iter()
        .filter(|r| r.efficacy)
        .take_while(|r| r.label != plan_label)
        .map(|r| (r.target_events, r.efficacy_z_bound))
        .collect::<Vec<_>>();
    let as_planned = observed_events == row.target_events
        && planned_history.len() == history.len()
        && planned_history
            .iter()
            .zip(history)
            .all(|(&(e, z), h)| e == h.events && z == Some(h.z_bound));
    if as_planned {
        if let (Some(z), Some(hr), Some(level)) = (
            row.efficacy_z_bound,
            row.efficacy_hr_bound,
            row.nominal_level_one_sided,
        ) {
            return Ok(RecalculatedBound {
                nominal_level_one_sided: level,
                z,
                hr,
            });
        }
    }

    let t = observed_events as f64 / table.max_events as f64;
    let (density, spent) = replay_history(table, history)?;
    let target = table.spend(t)?;
    let z = solve_upper_bound(&density, table.info(observed_events as f64), target - spent)?;
    RecalculatedBound::from_z(z, observed_events, table.allocation_ratio)
}

/// Bound for the primary analysis at `observed_final_events`.
///
/// Earlier bounds stay frozen; information fractions become `d_k / d_final`.
pub fn recalc_primary_level(
    table: &BoundaryTable,
    history: &[ConductedLook],
    observed_final_events: u32,
) -> Result<RecalculatedBound> {
    if observed_final_events == 0 {
        return Err(Error::Domain("an analysis needs at least one event".into()));
    }
    if let Some(last) = history.last() {
        if observed_final_events <= last.events {
            return Err(Error::Contract(format!(
                "primary analysis at {observed_final_events} events does not exceed the last interim at {}",
                last.events
            )));
        }
    }
    let primary = table.primary();
    let planned_history: Vec<_> = table
        .rows
        .iter()
        .filter(|r| r.efficacy && r.label != primary.label)
        .map(|r| (r.target_events, r.efficacy_z_bound))
        .collect();
    let as_planned = observed_final_events == table.max_events
        && planned_history.len() == history.len()
        && planned_history
            .iter()
            .zip(history)
            .all(|(&(e, z), h)| e == h.events && z == Some(h.z_bound));
    if as_planned {
        if let (Some(z), Some(hr), Some(level)) = (
            primary.efficacy_z_bound,
            primary.efficacy_hr_bound,
            primary.nominal_level_one_sided,
        ) {
            return Ok(RecalculatedBound {
                nominal_level_one_sided: level,
                z,
                hr,
            });
        }
    }

    let (density, spent) = replay_history(table, history)?;
    let remaining = table.alpha_one_sided - spent;
    let info = information(observed_final_events as f64, table.allocation_ratio);
    let z = if history.is_empty() {
        norm_quantile(1.0 - table.alpha_one_sided)?
    } else {
        solve_upper_bound(&density, info, remaining)?
    };
    RecalculatedBound::from_z(z, observed_final_events, table.allocation_ratio)
}

/// Null probability that a design with these frozen looks and a final bound
/// rejects; used to check the recalculated bound independently.
pub fn total_null_rejection(
    table: &BoundaryTable,
    history: &[ConductedLook],
    final_events: u32,
    final_z: f64,
) -> Result<f64> {
    let (density, spent) = replay_history(table, history)?;
    Ok(spent + density.upper_tail(table.info(final_events as f64), DriftParameter::NULL, final_z)?)
}
