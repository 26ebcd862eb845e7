//! Patient-level Monte Carlo of a group-sequential trial.
//!
//! Each trial draws from its own ChaCha stream selected by `(seed,
//! trial_index)`, so results do not depend on how trials are scheduled.
//! Decisions go through [`TrialCourse::record`], so every simulated decision
//! path is a valid course.

mod logrank;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{BoundaryTable, DesignSpec};
use crate::monitoring::{
    AnalysisRecord, Decision, HypothesisState, ObservedEffect, TrialCourse,
};
use crate::timing::{month_offset_to_date, TrialModel};
use crate::{Error, Result};

use logrank::{logrank_z, Patient};

fn default_ssd_lag_days() -> u32 {
    42
}

fn default_first_patient_in() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub design: DesignSpec,
    pub table: BoundaryTable,
    pub model: TrialModel,
    /// True hazard ratio; the experimental hazard is `hr_true × λ_control`.
    pub hr_true: f64,
    pub n_trials: u64,
    pub seed: u64,
    pub honor_futility: bool,
    /// Observed event counts drawn uniformly within `±fraction` of each
    /// target, to exercise over- and underrunning.
    #[serde(default)]
    pub event_perturbation: Option<f64>,
    #[serde(default = "default_ssd_lag_days")]
    pub ssd_lag_days: u32,
    #[serde(default = "default_first_patient_in")]
    pub first_patient_in: NaiveDate,
}

impl SimConfig {
    pub fn new(
        design: DesignSpec,
        table: BoundaryTable,
        model: TrialModel,
        hr_true: f64,
        n_trials: u64,
        seed: u64,
    ) -> Self {
        Self {
            design,
            table,
            model,
            hr_true,
            n_trials,
            seed,
            honor_futility: true,
            event_perturbation: None,
            ssd_lag_days: default_ssd_lag_days(),
            first_patient_in: default_first_patient_in(),
        }
    }

    pub fn honor_futility(mut self, honor: bool) -> Self {
        self.honor_futility = honor;
        self
    }

    pub fn event_perturbation(mut self, fraction: f64) -> Self {
        self.event_perturbation = Some(fraction);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        self.model.validate()?;
        if self.n_trials == 0 {
            return Err(Error::Domain("n_trials must be at least 1".into()));
        }
        if !(self.hr_true > 0.0 && self.hr_true.is_finite()) {
            return Err(Error::Domain(format!("hr_true must be positive, got {}", self.hr_true)));
        }
        if let Some(f) = self.event_perturbation {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::Domain(format!("event perturbation must lie in [0, 1), got {f}")));
            }
        }
        if self.table.binding_futility && !self.honor_futility {
            return Err(Error::Domain(
                "a binding futility design cannot be simulated with futility ignored".into(),
            ));
        }
        if (self.table.allocation_ratio - self.model.allocation_ratio).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!(
                "design allocation ratio {} differs from the model's {}",
                self.table.allocation_ratio, self.model.allocation_ratio
            )));
        }
        TrialCourse::new(self.design.clone(), self.table.clone())?;
        Ok(())
    }
}

/// One conducted analysis of a simulated trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimAnalysis {
    pub label: String,
    pub events: u32,
    pub ccod_month: f64,
    pub z: f64,
    pub hr: f64,
    pub efficacy_z_bound: Option<f64>,
    pub decision: Decision,
    pub futility_recommended: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub trial_index: u64,
    pub analyses: Vec<SimAnalysis>,
    pub hypothesis_state: HypothesisState,
}

impl SimOutcome {
    /// The analysis that settled the hypothesis.
    pub fn stopping(&self) -> &SimAnalysis {
        self.analyses.last().expect("a simulated trial has at least one analysis")
    }

    pub fn rejected(&self) -> bool {
        self.hypothesis_state == HypothesisState::Rejected
    }

    pub fn duration_months(&self) -> f64 {
        self.stopping().ccod_month
    }
}

fn draw_patients(config: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<Patient> {
    let model = &config.model;
    let n = model.n_total as usize;
    let n_exp = (n as f64 * model.experimental_share()).round() as usize;
    let mut arms: Vec<bool> = (0..n).map(|i| i < n_exp).collect();
    arms.shuffle(rng);

    let hazard_c = model.hazard_control();
    let hazard_e = config.hr_true * hazard_c;
    let dropout = model.dropout_hazard();
    let exponential = |rng: &mut ChaCha8Rng, rate: f64| -> f64 {
        if rate > 0.0 {
            -(1.0 - rng.random::<f64>()).ln() / rate
        } else {
            f64::INFINITY
        }
    };
    arms.into_iter()
        .map(|experimental| {
            let entry = model.accrual.entry_time(rng.random::<f64>());
            let t_event = exponential(rng, if experimental { hazard_e } else { hazard_c });
            let t_drop = exponential(rng, dropout);
            let (event, exit) = if t_event <= t_drop {
                (entry + t_event, entry + t_event)
            } else {
                (f64::INFINITY, entry + t_drop)
            };
            Patient { entry, experimental, event, exit }
        })
        .collect()
}

/// Observed event count at each planned analysis.
fn analysis_counts(config: &SimConfig, rng: &mut ChaCha8Rng, available: u32) -> Result<Vec<u32>> {
    let rows = &config.table.rows;
    let max = config.table.max_events;
    let mut counts = Vec::with_capacity(rows.len());
    let mut prev = 0u32;
    for (i, row) in rows.iter().enumerate() {
        let primary = i + 1 == rows.len();
        let mut d = match config.event_perturbation {
            Some(f) if f > 0.0 => {
                let factor = 1.0 + rng.random_range(-f..=f);
                (row.target_events as f64 * factor).round() as u32
            }
            _ => row.target_events,
        };
        d = d.max(prev + 1);
        if !primary {
            d = d.min(max - 1);
        }
        if d > available || d <= prev {
            return Err(Error::Numerical(format!(
                "simulated trial has {available} events, too few for `{}` at {d}",
                row.label
            )));
        }
        counts.push(d);
        prev = d;
    }
    Ok(counts)
}

fn analysis_date(config: &SimConfig, month: f64) -> (NaiveDate, NaiveDate) {
    let ccod = month_offset_to_date(config.first_patient_in, month);
    (ccod, ccod + chrono::Days::new(config.ssd_lag_days as u64))
}

fn look_record(config: &SimConfig, label: &str, month: f64, events: u32, z: f64) -> AnalysisRecord {
    let (ccod, ssd) = analysis_date(config, month);
    let mut rec = AnalysisRecord::new(label, ccod, ssd, events, ObservedEffect::Z(z));
    if !config.honor_futility {
        rec = rec.overrule_futility();
    }
    rec
}

/// Simulate trial number `trial_index`; deterministic in `(seed, trial_index)`.
pub fn simulate_trial(config: &SimConfig, trial_index: u64) -> Result<SimOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(trial_index);
    let patients = draw_patients(config, &mut rng);

    let mut event_times: Vec<f64> = patients.iter().map(|p| p.event).filter(|t| t.is_finite()).collect();
    event_times.sort_unstable_by(f64::total_cmp);
    let counts = analysis_counts(config, &mut rng, event_times.len() as u32)?;

    let mut course = TrialCourse::new(config.design.clone(), config.table.clone())?;
    let mut analyses = Vec::with_capacity(counts.len());
    let mut scratch = Vec::with_capacity(patients.len());
    for (row, &target) in config.table.rows.iter().zip(&counts) {
        let month = event_times[target as usize - 1];
        let (z, events) = logrank_z(&patients, month, &mut scratch);
        let (next, _) = course.record(look_record(config, &row.label, month, events, z))?;
        course = next;
        let observed = course.analyses.last().expect("just recorded");
        analyses.push(SimAnalysis {
            label: row.label.clone(),
            events,
            ccod_month: month,
            z,
            hr: observed.observed_hr,
            efficacy_z_bound: observed.recalculated.map(|b| b.z),
            decision: observed.decision.expect("testing analyses carry a decision"),
            futility_recommended: observed.futility_recommended,
        });
        if !course.is_open() {
            break;
        }
    }
    Ok(SimOutcome {
        trial_index,
        analyses,
        hypothesis_state: course.hypothesis_state,
    })
}

/// All trials of `config`, in trial-index order.
pub fn simulate(config: &SimConfig) -> Result<Vec<SimOutcome>> {
    config.validate()?;
    (0..config.n_trials)
        .into_par_iter()
        .map(|i| simulate_trial(config, i))
        .collect()
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
}

impl McEstimate {
    pub fn proportion(hits: u64, n: u64) -> Self {
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN };
        }
        let p = hits as f64 / n as f64;
        Self {
            mean: p,
            se: (p * (1.0 - p) / n as f64).sqrt(),
        }
    }

    pub fn sample_mean(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, se }
    }

    /// Whether `value` lies within `k` standard errors of the mean.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookCharacteristics {
    pub label: String,
    pub conducted: McEstimate,
    pub efficacy_stop: McEstimate,
    pub futility_stop: McEstimate,
    pub futility_recommended: McEstimate,
    /// Among trials that conducted the look.
    pub mean_ccod_month: McEstimate,
    pub mean_events: McEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub n_trials: u64,
    pub hr_true: f64,
    pub honor_futility: bool,
    pub rejection: McEstimate,
    pub futility_stop: McEstimate,
    pub expected_events: McEstimate,
    pub expected_duration_months: McEstimate,
    pub looks: Vec<LookCharacteristics>,
}

/// Aggregate outcomes in index order; the result is independent of how the
/// outcomes were produced.
pub fn aggregate(config: &SimConfig, outcomes: &[SimOutcome]) -> OperatingCharacteristics {
    let n = outcomes.len() as u64;
    let count = |f: &dyn Fn(&SimOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as u64;
    let looks = config
        .table
        .rows
        .iter()
        .map(|row| {
            let at = |o: &SimOutcome| o.analyses.iter().find(|a| a.label == row.label).cloned();
            let conducted: Vec<SimAnalysis> = outcomes.iter().filter_map(at).collect();
            let m = conducted.len() as u64;
            let hits = |f: &dyn Fn(&SimAnalysis) -> bool| conducted.iter().filter(|a| f(a)).count() as u64;
            LookCharacteristics {
                label: row.label.clone(),
                conducted: McEstimate::proportion(m, n),
                efficacy_stop: McEstimate::proportion(hits(&|a| a.decision == Decision::StopEfficacy), n),
                futility_stop: McEstimate::proportion(hits(&|a| a.decision == Decision::StopFutility), n),
                futility_recommended: McEstimate::proportion(hits(&|a| a.futility_recommended), n),
                mean_ccod_month: McEstimate::sample_mean(
                    &conducted.iter().map(|a| a.ccod_month).collect::<Vec<_>>(),
                ),
                mean_events: McEstimate::sample_mean(
                    &conducted.iter().map(|a| a.events as f64).collect::<Vec<_>>(),
                ),
            }
        })
        .collect();
    OperatingCharacteristics {
        n_trials: n,
        hr_true: config.hr_true,
        honor_futility: config.honor_futility,
        rejection: McEstimate::proportion(count(&|o| o.rejected()), n),
        futility_stop: McEstimate::proportion(
            count(&|o| o.hypothesis_state == HypothesisState::AbandonedFutility),
            n,
        ),
        expected_events: McEstimate::sample_mean(
            &outcomes.iter().map(|o| o.stopping().events as f64).collect::<Vec<_>>(),
        ),
        expected_duration_months: McEstimate::sample_mean(
            &outcomes.iter().map(SimOutcome::duration_months).collect::<Vec<_>>(),
        ),
        looks,
    }
}

pub fn operating_characteristics(config: &SimConfig) -> Result<OperatingCharacteristics> {
    let outcomes = simulate(config)?;
    Ok(aggregate(config, &outcomes))
}

/// Rebuild the monitoring course of a simulated trial.
pub fn replay_report(config: &SimConfig, outcome: &SimOutcome) -> Result<TrialCourse> {
    let mut course = TrialCourse::new(config.design.clone(), config.table.clone())?
        .with_first_patient_in(config.first_patient_in);
    for a in &outcome.analyses {
        let mut rec = look_record(config, &a.label, a.ccod_month, a.events, a.z);
        if a.futility_recommended && a.decision != Decision::StopFutility {
            rec = rec.overrule_futility();
        }
        course = course.record(rec)?.0;
    }
    Ok(course)
}

/// One CSV row per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub trial_index: u64,
    pub stop_label: String,
    pub decision: Decision,
    pub rejected: bool,
    pub events: u32,
    pub z: f64,
    pub hr: f64,
    pub duration_months: f64,
}

impl From<&SimOutcome> for OutcomeRow {
    fn from(o: &SimOutcome) -> Self {
        let s = o.stopping();
        Self {
            trial_index: o.trial_index,
            stop_label: s.label.clone(),
            decision: s.decision,
            rejected: o.rejected(),
            events: s.events,
            z: s.z,
            hr: s.hr,
            duration_months: s.ccod_month,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::compute_boundaries;
    use crate::monitoring::{designate, ReportingLabel};

    fn config(hr: f64, n: u64) -> SimConfig {
        let spec = DesignSpec::hypothetical_trial();
        let table = compute_boundaries(&spec, 385).unwrap();
        SimConfig::new(spec, table, TrialModel::hypothetical_trial(), hr, n, 20240917)
    }

    #[test]
    fn deterministic_per_trial() {
        let c = config(0.75, 4);
        assert_eq!(simulate_trial(&c, 3).unwrap(), simulate_trial(&c, 3).unwrap());
        assert_ne!(simulate_trial(&c, 2).unwrap(), simulate_trial(&c, 3).unwrap());
    }

    #[test]
    fn aggregate_is_independent_of_thread_count() {
        let c = config(0.8, 64);
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| operating_characteristics(&c).unwrap());
        let parallel = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| operating_characteristics(&c).unwrap());
        assert_eq!(serial, parallel);
    }

    #[test]
    fn analyses_happen_at_their_targets() {
        let c = config(0.75, 50);
        for o in simulate(&c).unwrap() {
            for a in &o.analyses {
                let target = c.table.row(&a.label).unwrap().target_events;
                assert_eq!(a.events, target);
            }
        }
    }

    #[test]
    fn perturbed_counts_stay_in_range() {
        let c = config(1.0, 50).event_perturbation(0.15);
        for o in simulate(&c).unwrap() {
            let mut prev = 0;
            for a in &o.analyses {
                let target = c.table.row(&a.label).unwrap().target_events as f64;
                assert!(a.events > prev);
                assert!((a.events as f64 - target).abs() <= 0.15 * target + 1.0);
                prev = a.events;
            }
        }
    }

    #[test]
    fn single_trial_has_zero_variance_aggregate() {
        let oc = operating_characteristics(&config(0.75, 1)).unwrap();
        assert_eq!(oc.n_trials, 1);
        assert_eq!(oc.rejection.se, 0.0);
        assert_eq!(oc.expected_events.se, 0.0);
    }

    #[test]
    fn replay_matches_simulated_path() {
        let c = config(0.75, 40).honor_futility(false);
        for o in simulate(&c).unwrap() {
            let course = replay_report(&c, &o).unwrap();
            assert_eq!(course.hypothesis_state, o.hypothesis_state);
            assert_eq!(course.analyses.len(), o.analyses.len());
            let d = designate(&course).unwrap();
            let confirmatory = d.confirmatory().unwrap();
            assert_eq!(confirmatory, o.stopping().label);
            assert_eq!(d.reporting_label(confirmatory), Some(ReportingLabel::ConfirmatoryAnalysis));
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(config(0.75, 0).validate().is_err());
        assert!(config(0.0, 10).validate().is_err());
        assert!(config(0.75, 10).event_perturbation(1.5).validate().is_err());
    }

    #[test]
    fn mc_estimates() {
        let p = McEstimate::proportion(25, 100);
        assert_eq!(p.mean, 0.25);
        assert!((p.se - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
        let m = McEstimate::sample_mean(&[1.0, 2.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert!((m.se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
