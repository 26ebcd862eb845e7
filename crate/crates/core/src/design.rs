//! Design-stage calculations: spending, event targets, boundaries, power.
//!
//! Effects are on the hazard-ratio scale throughout; a superiority design
//! has `hr_alternative < 1` and large positive z favours the experimental
//! arm. Under the Schoenfeld approximation the log hazard ratio estimate
//! has variance `(1 + r)² / (r·d)` for `d` events at allocation `r:1`.

use serde::{Deserialize, Serialize};

use crate::numerics::{
    find_root, norm_quantile, norm_sf, DriftParameter, Quadrature, SubDensity,
};
use crate::{Error, Result};

const Z_BRACKET: (f64, f64) = (-20.0, 40.0);
const Z_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpendingFamily {
    /// Lan-DeMets approximation to O'Brien-Fleming boundaries.
    #[default]
    #[serde(alias = "lan_demets_obf")]
    LanDeMetsObf,
}

impl SpendingFamily {
    /// Cumulative one-sided alpha spent by information fraction `t`.
    pub fn spend(self, t: f64, alpha: f64) -> Result<f64> {
        match self {
            SpendingFamily::LanDeMetsObf => spend(t, alpha),
        }
    }
}

/// Lan-DeMets O'Brien-Fleming type spending, `2·(1 − Φ(Φ⁻¹(1 − α/2)/√t))`.
pub fn spend(t: f64, alpha: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Domain(format!(
            "information fraction must lie in (0, 1], got {t}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if t == 1.0 {
        return Ok(alpha);
    }
    let z = norm_quantile(1.0 - alpha / 2.0)?;
    Ok(2.0 * norm_sf(z / t.sqrt()))
}

/// Fisher information for the log hazard ratio carried by `events` events.
pub fn information(events: f64, allocation_ratio: f64) -> f64 {
    events * allocation_ratio / (1.0 + allocation_ratio).powi(2)
}

fn check_ratio(allocation_ratio: f64) -> Result<()> {
    if !(allocation_ratio > 0.0 && allocation_ratio.is_finite()) {
        return Err(Error::Domain(format!(
            "allocation ratio must be positive, got {allocation_ratio}"
        )));
    }
    Ok(())
}

/// z statistic equivalent to an observed hazard ratio at `events` events.
pub fn hr_to_z(hr: f64, events: f64, allocation_ratio: f64) -> Result<f64> {
    if !(hr > 0.0 && hr.is_finite()) {
        return Err(Error::Domain(format!("hazard ratio must be positive, got {hr}")));
    }
    if !(events >= 1.0) {
        return Err(Error::Domain(format!("need at least one event, got {events}")));
    }
    check_ratio(allocation_ratio)?;
    // `+ 0.0` keeps HR = 1 at +0 rather than -0.
    Ok(-hr.ln() * information(events, allocation_ratio).sqrt() + 0.0)
}

/// Hazard ratio equivalent to a z statistic at `events` events.
pub fn z_to_hr(z: f64, events: f64, allocation_ratio: f64) -> Result<f64> {
    if !(events >= 1.0) {
        return Err(Error::Domain(format!("need at least one event, got {events}")));
    }
    check_ratio(allocation_ratio)?;
    Ok((-z / information(events, allocation_ratio).sqrt()).exp())
}

/// Schoenfeld event count for a single-look design, rounded up.
pub fn fixed_design_events(
    alpha_one_sided: f64,
    power_target: f64,
    hr_alternative: f64,
    allocation_ratio: f64,
) -> Result<u32> {
    check_levels(alpha_one_sided, power_target)?;
    check_ratio(allocation_ratio)?;
    if !(hr_alternative > 0.0) || hr_alternative == 1.0 {
        return Err(Error::Domain(format!(
            "alternative hazard ratio must be positive and different from 1, got {hr_alternative}"
        )));
    }
    let d = fixed_design_information(alpha_one_sided, power_target, hr_alternative)?
        / information(1.0, allocation_ratio);
    Ok(d.ceil() as u32)
}

fn fixed_design_information(alpha: f64, power: f64, hr: f64) -> Result<f64> {
    let za = norm_quantile(1.0 - alpha)?;
    let zb = norm_quantile(power)?;
    Ok(((za + zb) / hr.ln()).powi(2))
}

fn check_levels(alpha: f64, power: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Domain(format!(
            "one-sided alpha must lie in (0, 0.5), got {alpha}"
        )));
    }
    if !(power > alpha && power < 1.0) {
        return Err(Error::Domain(format!(
            "power must lie in (alpha, 1), got {power} with alpha {alpha}"
        )));
    }
    Ok(())
}

/// Critical value of the test on the hazard-ratio scale.
pub fn minimal_detectable_difference(
    events: f64,
    alpha_level_one_sided: f64,
    allocation_ratio: f64,
) -> Result<f64> {
    if !(alpha_level_one_sided > 0.0 && alpha_level_one_sided < 0.5) {
        return Err(Error::Domain(format!(
            "one-sided level must lie in (0, 0.5), got {alpha_level_one_sided}"
        )));
    }
    let z = norm_quantile(1.0 - alpha_level_one_sided)?;
    z_to_hr(z, events, allocation_ratio)
}

/// One pre-planned analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisPlan {
    pub label: String,
    pub information_fraction: f64,
    pub efficacy: bool,
    /// Recommend stopping when the observed hazard ratio is at or above this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub futility_hr_threshold: Option<f64>,
}

impl AnalysisPlan {
    pub fn efficacy(label: impl Into<String>, information_fraction: f64) -> Self {
        Self {
            label: label.into(),
            information_fraction,
            efficacy: true,
            futility_hr_threshold: None,
        }
    }

    pub fn futility(label: impl Into<String>, information_fraction: f64, hr_threshold: f64) -> Self {
        Self {
            label: label.into(),
            information_fraction,
            efficacy: false,
            futility_hr_threshold: Some(hr_threshold),
        }
    }

    pub fn with_futility(mut self, hr_threshold: f64) -> Self {
        self.futility_hr_threshold = Some(hr_threshold);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub alpha_one_sided: f64,
    pub power_target: f64,
    pub hr_alternative: f64,
    #[serde(default = "default_ratio")]
    pub allocation_ratio: f64,
    #[serde(default)]
    pub spending_family: SpendingFamily,
    #[serde(default)]
    pub binding_futility: bool,
    pub analyses: Vec<AnalysisPlan>,
}

fn default_ratio() -> f64 {
    1.0
}

impl DesignSpec {
    /// The worked example: futility at 1/3 (HR ≥ 1), futility and efficacy
    /// at 2/3 (HR ≥ 0.9), primary analysis at full information.
    pub fn hypothetical_trial() -> Self {
        Self {
            alpha_one_sided: 0.025,
            power_target: 0.80,
            hr_alternative: 0.75,
            allocation_ratio: 1.0,
            spending_family: SpendingFamily::LanDeMetsObf,
            binding_futility: false,
            analyses: vec![
                AnalysisPlan::futility("IA1", 1.0 / 3.0, 1.0),
                AnalysisPlan::efficacy("IA2", 2.0 / 3.0).with_futility(0.9),
                AnalysisPlan::efficacy("Primary", 1.0),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDesign(msg));
        if !(self.alpha_one_sided > 0.0 && self.alpha_one_sided < 0.5) {
            return bad(format!("alpha_one_sided must lie in (0, 0.5), got {}", self.alpha_one_sided));
        }
        if !(self.power_target > 0.0 && self.power_target < 1.0) {
            return bad(format!("power_target must lie in (0, 1), got {}", self.power_target));
        }
        if self.power_target <= self.alpha_one_sided {
            return bad("power_target must exceed alpha_one_sided".into());
        }
        if !(self.hr_alternative > 0.0 && self.hr_alternative < 1.0) {
            return bad(format!(
                "hr_alternative must lie in (0, 1) for a superiority design, got {}",
                self.hr_alternative
            ));
        }
        if !(self.allocation_ratio > 0.0 && self.allocation_ratio.is_finite()) {
            return bad(format!("allocation_ratio must be positive, got {}", self.allocation_ratio));
        }
        if self.analyses.is_empty() {
            return bad("at least one analysis is required".into());
        }
        let mut prev = 0.0;
        for plan in &self.analyses {
            if plan.label.trim().is_empty() {
                return bad("analysis labels must be non-empty".into());
            }
            if !(plan.information_fraction > prev && plan.information_fraction <= 1.0) {
                return bad(format!(
                    "information fractions must be strictly increasing in (0, 1]; `{}` has {}",
                    plan.label, plan.information_fraction
                ));
            }
            prev = plan.information_fraction;
            if let Some(thr) = plan.futility_hr_threshold {
                if !(thr.is_finite() && thr >= self.hr_alternative) {
                    return bad(format!(
                        "futility threshold {thr} at `{}` is tighter than the alternative {}",
                        plan.label, self.hr_alternative
                    ));
                }
            }
        }
        let last = self.analyses.last().unwrap();
        if (last.information_fraction - 1.0).abs() > 1e-12 {
            return bad("the last analysis must be at information fraction 1".into());
        }
        if !last.efficacy {
            return bad("the last analysis must carry the efficacy role".into());
        }
        let mut labels: Vec<&str> = self.analyses.iter().map(|p| p.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return bad("analysis labels must be unique".into());
        }
        Ok(())
    }
}

/// One row of the boundary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub label: String,
    pub information_fraction: f64,
    pub target_events: u32,
    pub efficacy: bool,
    pub cumulative_alpha_spent: f64,
    pub nominal_level_one_sided: Option<f64>,
    pub efficacy_z_bound: Option<f64>,
    pub efficacy_hr_bound: Option<f64>,
    pub futility_hr_bound: Option<f64>,
    pub futility_z_bound: Option<f64>,
}

impl BoundaryRow {
    /// Two-sided presentation of the nominal level (twice the one-sided).
    pub fn nominal_level_two_sided(&self) -> Option<f64> {
        self.nominal_level_one_sided.map(|a| 2.0 * a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTable {
    pub alpha_one_sided: f64,
    pub allocation_ratio: f64,
    #[serde(default)]
    pub spending_family: SpendingFamily,
    #[serde(default)]
    pub binding_futility: bool,
    pub max_events: u32,
    pub rows: Vec<BoundaryRow>,
}

impl BoundaryTable {
    pub fn row(&self, label: &str) -> Result<&BoundaryRow> {
        self.rows
            .iter()
            .find(|r| r.label == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.rows
            .iter()
            .position(|r| r.label == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// The last pre-planned efficacy analysis.
    pub fn primary(&self) -> &BoundaryRow {
        self.rows.last().expect("boundary table has at least one row")
    }

    pub fn is_primary(&self, label: &str) -> bool {
        self.primary().label == label
    }

    pub fn info(&self, events: f64) -> f64 {
        information(events, self.allocation_ratio)
    }

    pub fn spend(&self, t: f64) -> Result<f64> {
        self.spending_family.spend(t, self.alpha_one_sided)
    }
}

/// Planned event count for a fraction of `max_events`.
///
/// Rounded up, which reproduces 129/257/385 for thirds of 385; a tiny
/// slack absorbs representation error in fractions like 0.1.
pub fn target_events(information_fraction: f64, max_events: u32) -> u32 {
    let raw = information_fraction * max_events as f64;
    ((raw - 1e-9).ceil().max(1.0) as u32).min(max_events)
}

/// Solve the upper bound at the next look so that the upper-tail mass from
/// `density` equals `increment`.
pub(crate) fn solve_upper_bound(
    density: &SubDensity,
    next_info: f64,
    increment: f64,
) -> Result<f64> {
    let reachable = density.upper_tail(next_info, DriftParameter::NULL, Z_BRACKET.0)?;
    if !(increment > 1e-15) || increment >= reachable {
        return Err(Error::Numerical(format!(
            "alpha increment {increment:e} is outside the achievable range (0, {reachable:e}) at information {next_info}"
        )));
    }
    find_root(
        |b| {
            density
                .upper_tail(next_info, DriftParameter::NULL, b)
                .unwrap_or(f64::NAN)
                - increment
        },
        Z_BRACKET.0,
        Z_BRACKET.1,
        Z_TOL,
    )
}

pub fn compute_boundaries(spec: &DesignSpec, max_events: u32) -> Result<BoundaryTable> {
    compute_boundaries_with(spec, max_events, Quadrature::default())
}

pub fn compute_boundaries_with(
    spec: &DesignSpec,
    max_events: u32,
    quad: Quadrature,
) -> Result<BoundaryTable> {
    spec.validate()?;
    if max_events < 1 {
        return Err(Error::InvalidDesign("max_events must be at least 1".into()));
    }
    let ratio = spec.allocation_ratio;
    let mut rows = Vec::with_capacity(spec.analyses.len());
    let mut density = SubDensity::origin();
    let mut spent = 0.0;
    let mut prev_events = 0;

    for plan in &spec.analyses {
        let events = target_events(plan.information_fraction, max_events);
        if events <= prev_events {
            return Err(Error::InvalidDesign(format!(
                "`{}` rounds to {events} events, not beyond the previous analysis at {prev_events}",
                plan.label
            )));
        }
        prev_events = events;
        let t = events as f64 / max_events as f64;
        let info = information(events as f64, ratio);

        let futility_z = plan
            .futility_hr_threshold
            .map(|thr| hr_to_z(thr, events as f64, ratio))
            .transpose()?;

        let mut row = BoundaryRow {
            label: plan.label.clone(),
            information_fraction: t,
            target_events: events,
            efficacy: plan.efficacy,
            cumulative_alpha_spent: spent,
            nominal_level_one_sided: None,
            efficacy_z_bound: None,
            efficacy_hr_bound: None,
            futility_hr_bound: plan.futility_hr_threshold,
            futility_z_bound: futility_z,
        };

        let lower = match (spec.binding_futility, futility_z) {
            (true, Some(z)) => z,
            _ => f64::NEG_INFINITY,
        };
        let in_recursion = plan.efficacy || lower > f64::NEG_INFINITY;
        if !in_recursion {
            rows.push(row);
            continue;
        }

        let upper = if plan.efficacy {
            let target = spec.spending_family.spend(t, spec.alpha_one_sided)?;
            let b = solve_upper_bound(&density, info, target - spent).map_err(|e| {
                Error::Numerical(format!("efficacy bound at `{}`: {e}", plan.label))
            })?;
            spent += density.upper_tail(info, DriftParameter::NULL, b)?;
            row.cumulative_alpha_spent = spent;
            row.nominal_level_one_sided = Some(norm_sf(b));
            row.efficacy_z_bound = Some(b);
            row.efficacy_hr_bound = Some(z_to_hr(b, events as f64, ratio)?);
            b
        } else {
            f64::INFINITY
        };
        if lower >= upper {
            return Err(Error::InvalidDesign(format!(
                "futility bound crosses the efficacy bound at `{}`",
                plan.label
            )));
        }
        density = density.advance(info, DriftParameter::NULL, lower, upper, quad)?;
        rows.push(row);
    }

    Ok(BoundaryTable {
        alpha_one_sided: spec.alpha_one_sided,
        allocation_ratio: ratio,
        spending_family: spec.spending_family,
        binding_futility: spec.binding_futility,
        max_events,
        rows,
    })
}

/// Rejection probability of a computed table under `hr_true`.
///
/// With `honor_futility`, futility thresholds act as binding lower bounds.
pub fn table_power(table: &BoundaryTable, hr_true: f64, honor_futility: bool) -> Result<f64> {
    let drift = DriftParameter::from_hazard_ratio(hr_true)?;
    let quad = Quadrature::default();
    let mut density = SubDensity::origin();
    let mut reject = 0.0;
    for row in &table.rows {
        let info = table.info(row.target_events as f64);
        let upper = row.efficacy_z_bound.unwrap_or(f64::INFINITY);
        let lower = if honor_futility || table.binding_futility {
            row.futility_z_bound.unwrap_or(f64::NEG_INFINITY)
        } else {
            f64::NEG_INFINITY
        };
        if upper == f64::INFINITY && lower == f64::NEG_INFINITY {
            continue;
        }
        if lower >= upper {
            return Err(Error::InvalidDesign(format!(
                "futility bound crosses the efficacy bound at `{}`",
                row.label
            )));
        }
        reject += density.upper_tail(info, drift, upper)?;
        density = density.advance(info, drift, lower, upper, quad)?;
    }
    Ok(reject)
}

pub fn power(spec: &DesignSpec, max_events: u32, hr_true: f64, honor_futility: bool) -> Result<f64> {
    let table = compute_boundaries(spec, max_events)?;
    table_power(&table, hr_true, honor_futility)
}

/// Smallest maximum event count reaching the target power.
///
/// Futility is ignored here: its power loss is reported, not compensated.
pub fn required_max_events(spec: &DesignSpec) -> Result<u32> {
    required_max_events_with(spec, false)
}

/// As [`required_max_events`], optionally calibrating with futility honoured.
pub fn required_max_events_with(spec: &DesignSpec, honor_futility: bool) -> Result<u32> {
    spec.validate()?;
    let fixed = fixed_design_events(
        spec.alpha_one_sided,
        spec.power_target,
        spec.hr_alternative,
        spec.allocation_ratio,
    )?;
    let shortfall = |d: u32| -> Result<f64> {
        Ok(power(spec, d, spec.hr_alternative, honor_futility)? - spec.power_target)
    };

    // Bracket on a continuous scale first, then settle the integer.
    let lo = ((fixed as f64) * 0.9).floor().max(1.0);
    let mut hi = (fixed as f64) * 1.2 + 2.0;
    while shortfall(hi.ceil() as u32)? < 0.0 {
        hi *= 1.5;
        if hi > 1e8 {
            return Err(Error::Numerical("target power is unattainable".into()));
        }
    }
    let guess = find_root(
        |d| shortfall(d.round() as u32).unwrap_or(f64::NAN),
        lo,
        hi,
        0.5,
    )
    .map(|d| d.ceil() as u32)
    .unwrap_or(fixed);

    let mut d = guess.max(1);
    while shortfall(d)? < 0.0 {
        d += 1;
    }
    while d > 1 && shortfall(d - 1)? >= 0.0 {
        d -= 1;
    }
    Ok(d)
}
