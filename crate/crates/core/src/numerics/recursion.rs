//! Stagewise recursion for the canonical joint distribution of
//! group-sequential statistics.
//!
//! With Fisher information `I_1 < … < I_K` for the log hazard ratio and
//! drift `θ`, the stage statistics satisfy `Z_k ~ N(θ√I_k, 1)` and
//! `Cov(Z_j, Z_k) = √(I_j / I_k)` for `j ≤ k`. Exit and continuation
//! probabilities are computed by integrating the sub-density of `Z_k` on
//! the continuation region forward one stage at a time, using the
//! Jennison-Turnbull grid with composite Simpson weights.

use crate::numerics::{norm_cdf, norm_pdf, norm_sf};
use crate::{Error, Result};

/// Effect on the z-drift scale: `θ = −ln(HR)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DriftParameter {
    pub theta: f64,
}

impl DriftParameter {
    pub const NULL: DriftParameter = DriftParameter { theta: 0.0 };

    pub fn new(theta: f64) -> Self {
        Self { theta }
    }

    pub fn from_hazard_ratio(hr: f64) -> Result<Self> {
        if !(hr > 0.0 && hr.is_finite()) {
            return Err(Error::Domain(format!("hazard ratio must be positive, got {hr}")));
        }
        Ok(Self { theta: -hr.ln() })
    }

    /// Mean of the statistic at information `info`.
    #[inline]
    pub fn mean_at(&self, info: f64) -> f64 {
        self.theta * info.sqrt()
    }
}

/// Grid resolution. `r` is the Jennison-Turnbull parameter; each stage is
/// integrated on at most `12r − 3` points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quadrature {
    pub r: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { r: 48 }
    }
}

impl Quadrature {
    pub fn new(r: usize) -> Result<Self> {
        if r < 2 {
            return Err(Error::Domain(format!("quadrature parameter r must be >= 2, got {r}")));
        }
        Ok(Self { r })
    }

    /// Maximum number of integration points per stage.
    pub fn points(&self) -> usize {
        12 * self.r - 3
    }

    /// Nodes and Simpson weights on `[lower, upper] ∩ grid` around `mean`.
    fn nodes(&self, mean: f64, lower: f64, upper: f64) -> (Vec<f64>, Vec<f64>) {
        let r = self.r as f64;
        let m = 6 * self.r - 1;
        let mut base = Vec::with_capacity(m + 2);
        for i in 1..=m {
            let i_f = i as f64;
            let x = if i < self.r {
                mean - 3.0 - 4.0 * (r / i_f).ln()
            } else if i <= 5 * self.r {
                mean - 3.0 + 1.5 * (i_f - r) / r
            } else {
                mean + 3.0 + 4.0 * (r / (6.0 * r - i_f)).ln()
            };
            base.push(x);
        }
        let lo = lower.max(base[0]);
        let hi = upper.min(base[m - 1]);
        if !(lo < hi) {
            return (Vec::new(), Vec::new());
        }
        let mut pts: Vec<f64> = Vec::with_capacity(m + 2);
        pts.push(lo);
        pts.extend(base.into_iter().filter(|&x| x > lo && x < hi));
        pts.push(hi);


        let n = 2 * pts.len() - 1;
        let mut z = Vec::with_capacity(n);
        let mut w = vec![0.0; n];
        for (j, pair) in pts.windows(2).enumerate() {
            let h = pair[1] - pair[0];
            z.push(pair[0]);
            z.push(0.5 * (pair[0] + pair[1]));
            w[2 * j] += h / 6.0;
            w[2 * j + 1] += 4.0 * h / 6.0;
            w[2 * j + 2] += h / 6.0;
        }
        z.push(*pts.last().unwrap());
        (z, w)
    }
}

/// Continuation region on the z scale with per-stage information levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationRegion {
    information: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ContinuationRegion {
    /// `lower[k] < upper[k]` is required; either may be infinite.
    pub fn new(information: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if information.is_empty() {
            return Err(Error::Domain("continuation region needs at least one stage".into()));
        }
        if lower.len() != information.len() || upper.len() != information.len() {
            return Err(Error::Domain(format!(
                "stage count mismatch: {} information levels, {} lower, {} upper bounds",
                information.len(),
                lower.len(),
                upper.len()
            )));
        }
        check_information(&information)?;
        for (k, (&a, &b)) in lower.iter().zip(&upper).enumerate() {
            if a.is_nan() || b.is_nan() || !(a < b) {
                return Err(Error::Domain(format!(
                    "stage {}: lower bound {a} must be below upper bound {b}",
                    k + 1
                )));
            }
        }
        Ok(Self {
            information,
            lower,
            upper,
        })
    }

    /// Upper bounds only; lower bounds are −∞.
    pub fn one_sided(information: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let lower = vec![f64::NEG_INFINITY; information.len()];
        Self::new(information, lower, upper)
    }

    pub fn stages(&self) -> usize {
        self.information.len()
    }

    pub fn information(&self) -> &[f64] {
        &self.information
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
}

pub(crate) fn check_information(information: &[f64]) -> Result<()> {
    let mut prev = 0.0;
    for (k, &info) in information.iter().enumerate() {
        if !(info.is_finite() && info > prev) {
            return Err(Error::Domain(format!(
                "information levels must be positive and strictly increasing (stage {}: {info} after {prev})",
                k + 1
            )));
        }
        prev = info;
    }
    Ok(())
}

/// Sub-density of the stage statistic restricted to the continuation
/// region, stored as node positions and `weight × density`.
///
/// The origin (information 0, point mass at zero) is the state before the
/// first analysis, so the first stage uses the same transition as the rest.
#[derive(Debug, Clone)]
pub struct SubDensity {
    info: f64,
    z: Vec<f64>,
    mass: Vec<f64>,
}

impl SubDensity {
    pub fn origin() -> Self {
        Self {
            info: 0.0,
            z: vec![0.0],
            mass: vec![1.0],
        }
    }

    pub fn information(&self) -> f64 {
        self.info
    }

    /// Probability of still being in the continuation region.
    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.z
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    fn transition(&self, next_info: f64) -> Result<(f64, f64, f64)> {
        let delta = next_info - self.info;
        if !(delta > 0.0) {
            return Err(Error::Domain(format!(
                "information must increase: {next_info} after {}",
                self.info
            )));
        }
        Ok((next_info.sqrt(), self.info.sqrt(), delta))
    }

    /// P(remain in region so far, then `Z_next ≥ bound`).
    pub fn upper_tail(&self, next_info: f64, drift: DriftParameter, bound: f64) -> Result<f64> {
        if bound == f64::INFINITY {
            return Ok(0.0);
        }
        let (sq_next, sq_prev, delta) = self.transition(next_info)?;
        let sd = delta.sqrt();
        let shift = bound * sq_next - drift.theta * delta;
        Ok(self
            .z
            .iter()
            .zip(&self.mass)
            .map(|(&z, &m)| m * norm_sf((shift - z * sq_prev) / sd))
            .sum())
    }

    /// P(remain in region so far, then `Z_next ≤ bound`).
    pub fn lower_tail(&self, next_info: f64, drift: DriftParameter, bound: f64) -> Result<f64> {
        if bound == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        let (sq_next, sq_prev, delta) = self.transition(next_info)?;
        let sd = delta.sqrt();
        let shift = bound * sq_next - drift.theta * delta;
        Ok(self
            .z
            .iter()
            .zip(&self.mass)
            .map(|(&z, &m)| m * norm_cdf((shift - z * sq_prev) / sd))
            .sum())
    }

    /// Sub-density of `Z_next` on `(lower, upper)`.
    pub fn advance(
        &self,
        next_info: f64,
        drift: DriftParameter,
        lower: f64,
        upper: f64,
        quad: Quadrature,
    ) -> Result<SubDensity> {
        let (sq_next, sq_prev, delta) = self.transition(next_info)?;
        let sd = delta.sqrt();
        let scale = sq_next / sd;
        let (z, w) = quad.nodes(drift.mean_at(next_info), lower, upper);
        let mass = z
            .iter()
            .zip(&w)
            .map(|(&zn, &wn)| {
                let target = zn * sq_next - drift.theta * delta;
                let dens: f64 = self
                    .z
                    .iter()
                    .zip(&self.mass)
                    .map(|(&zp, &mp)| mp * norm_pdf((target - zp * sq_prev) / sd))
                    .sum();
                wn * scale * dens
            })
            .collect();
        Ok(SubDensity {
            info: next_info,
            z,
            mass,
        })
    }
}

/// Per-stage exit probabilities and the mass that never exits.
#[derive(Debug, Clone, PartialEq)]
pub struct Crossings {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub continuation: f64,
}

impl Crossings {
    pub fn total_upper(&self) -> f64 {
        self.upper.iter().sum()
    }

    pub fn total_lower(&self) -> f64 {
        self.lower.iter().sum()
    }
}

pub fn crossing_probabilities(
    region: &ContinuationRegion,
    drift: DriftParameter,
    quad: Quadrature,
) -> Result<Crossings> {
    let k = region.stages();
    let mut upper = Vec::with_capacity(k);
    let mut lower = Vec::with_capacity(k);
    let mut density = SubDensity::origin();
    for stage in 0..k {
        let info = region.information[stage];
        let (a, b) = (region.lower[stage], region.upper[stage]);
        upper.push(density.upper_tail(info, drift, b)?);
        lower.push(density.lower_tail(info, drift, a)?);
        density = density.advance(info, drift, a, b, quad)?;
    }
    Ok(Crossings {
        upper,
        lower,
        continuation: density.total(),
    })
}

/// P(exit above the upper bound at `stage` (zero-based) having stayed in the
/// region at every earlier stage).
pub fn exit_probability(
    region: &ContinuationRegion,
    drift: DriftParameter,
    stage: usize,
) -> Result<f64> {
    if stage >= region.stages() {
        return Err(Error::Domain(format!(
            "stage {stage} out of range for a {}-stage region",
            region.stages()
        )));
    }
    let quad = Quadrature::default();
    let mut density = SubDensity::origin();
    for k in 0..stage {
        density = density.advance(
            region.information[k],
            drift,
            region.lower[k],
            region.upper[k],
            quad,
        )?;
    }
    density.upper_tail(region.information[stage], drift, region.upper[stage])
}

#[cfg(test)]
mod tests {
    use super::*;

    const Z975: f64 = 1.959_963_984_540_054;

    #[test]
    fn single_stage_is_a_normal_tail() {
        let region = ContinuationRegion::one_sided(vec![95.0], vec![Z975]).unwrap();
        let p = exit_probability(&region, DriftParameter::NULL, 0).unwrap();
        assert!((p - 0.025).abs() < 1e-12);
        let theta = 0.3;
        let p = exit_probability(&region, DriftParameter::new(theta), 0).unwrap();
        assert!((p - norm_sf(Z975 - theta * 95f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn mass_is_conserved_with_two_sided_bounds() {
        let region = ContinuationRegion::new(
            vec![10.0, 25.0, 40.0],
            vec![-0.5, 0.2, 1.9],
            vec![3.2, 2.6, 1.95],
        )
        .unwrap();
        for theta in [-0.2, 0.0, 0.15, 0.4] {
            let c = crossing_probabilities(&region, DriftParameter::new(theta), Quadrature::default())
                .unwrap();
            let total = c.total_upper() + c.total_lower() + c.continuation;
            assert!((total - 1.0).abs() < 1e-8, "theta {theta}: {total}");
        }
    }

    #[test]
    fn information_must_increase() {
        assert!(ContinuationRegion::one_sided(vec![10.0, 10.0], vec![2.0, 2.0]).is_err());
        assert!(ContinuationRegion::one_sided(vec![0.0], vec![2.0]).is_err());
        assert!(ContinuationRegion::new(vec![1.0], vec![2.0], vec![1.0]).is_err());
    }

    #[test]
    fn stage_out_of_range() {
        let region = ContinuationRegion::one_sided(vec![1.0], vec![2.0]).unwrap();
        assert!(exit_probability(&region, DriftParameter::NULL, 1).is_err());
    }

    #[test]
    fn default_grid_has_at_least_301_points() {
        let q = Quadrature::default();
        assert!(q.points() >= 301);
        let (z, w) = q.nodes(0.0, f64::NEG_INFINITY, f64::INFINITY);
        assert_eq!(z.len(), q.points());
        assert!(z.first().unwrap() <= &-6.0 && z.last().unwrap() >= &6.0);
        // Simpson weights integrate constants exactly.
        let span = z.last().unwrap() - z.first().unwrap();
        assert!((w.iter().sum::<f64>() - span).abs() < 1e-10);
    }

    #[test]
    fn grid_refinement_is_stable() {
        let region =
            ContinuationRegion::new(vec![32.0, 64.0, 96.0], vec![0.0, 0.8, f64::NEG_INFINITY], vec![3.5, 2.5, 2.0])
                .unwrap();
        let drift = DriftParameter::new(0.25);
        let a = crossing_probabilities(&region, drift, Quadrature::new(48).unwrap()).unwrap();
        let b = crossing_probabilities(&region, drift, Quadrature::new(96).unwrap()).unwrap();
        for (x, y) in a.upper.iter().zip(&b.upper).chain(a.lower.iter().zip(&b.lower)) {
            assert!((x - y).abs() < 1e-7, "{x} vs {y}");
        }
    }
}
