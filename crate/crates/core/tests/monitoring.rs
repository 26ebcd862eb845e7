use chrono::NaiveDate;
use gsd_core::design::{compute_boundaries, DesignSpec};
use gsd_core::monitoring::{
    designate, designate_partial, AnalysisRecord, Decision, HypothesisState, ObservedEffect,
    ReportingLabel, TrialCourse,
};
use gsd_core::Error;
use proptest::prelude::*;

use ReportingLabel::*;

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn course() -> TrialCourse {
    let spec = DesignSpec::hypothetical_trial();
    let table = compute_boundaries(&spec, 385).unwrap();
    TrialCourse::new(spec, table)
        .unwrap()
        .with_updated_analyses(vec!["Updated".into()])
}

fn look(label: &str, month: u32, events: u32, hr: f64) -> AnalysisRecord {
    let ccod = date(2021, 1, 1) + chrono::Months::new(month);
    AnalysisRecord::new(label, ccod, ccod + chrono::Days::new(28), events, ObservedEffect::HazardRatio(hr))
}

fn run(steps: &[AnalysisRecord]) -> TrialCourse {
    steps
        .iter()
        .fold(course(), |c, r| c.record(r.clone()).unwrap().0)
}

fn labels(c: &TrialCourse) -> Vec<(String, ReportingLabel)> {
    designate(c)
        .unwrap()
        .entries
        .into_iter()
        .map(|e| (e.label, e.reporting_label))
        .collect()
}

/// Named cells of one outcome column; every other row must be blank.
fn assert_column(c: &TrialCourse, named: &[(&str, ReportingLabel)]) {
    for (label, got) in labels(c) {
        match named.iter().find(|(l, _)| *l == label) {
            Some((_, want)) => assert_eq!(got, *want, "{label}"),
            None => assert!(!got.is_named(), "{label} should be blank, got {got:?}"),
        }
    }
}

#[test]
fn outcome_stop_at_first_interim() {
    let c = run(&[look("IA1", 6, 132, 1.07)]);
    assert_eq!(c.hypothesis_state, HypothesisState::AbandonedFutility);
    assert_eq!(c.analyses[0].decision, Some(Decision::StopFutility));
    assert_column(&c, &[("IA1", FutilityAnalysis), ("Primary", UpdatedAnalysis)]);
    let d = designate(&c).unwrap();
    assert_eq!(d.reporting_label("IA2"), Some(NotConducted));
    assert_eq!(d.reporting_label("Updated"), Some(NotConducted));
    assert_eq!(d.confirmatory(), None);
    assert_eq!(d.decisive, None);
}

#[test]
fn outcome_futility_at_second_interim() {
    let c = run(&[look("IA1", 6, 130, 0.95), look("IA2", 20, 257, 0.95)]);
    assert_eq!(c.hypothesis_state, HypothesisState::AbandonedFutility);
    assert_column(&c, &[("IA2", FutilityAnalysis), ("Primary", UpdatedAnalysis)]);
    assert_eq!(designate(&c).unwrap().reporting_label("IA1"), Some(NoReportingRole));
}

#[test]
fn outcome_efficacy_at_second_interim() {
    let (c, eval) = course()
        .record(look("IA1", 6, 130, 0.9))
        .unwrap()
        .0
        .record(look("IA2", 20, 255, 0.689))
        .unwrap();
    let eval = eval.unwrap();
    let bound = eval.bound.unwrap();
    assert!((bound.hr - 0.729).abs() < 0.0005, "{}", bound.hr);
    assert!((bound.nominal_level_two_sided() - 0.0117).abs() < 0.0005);
    assert_eq!(eval.recommendation, Decision::StopEfficacy);
    assert_eq!(c.hypothesis_state, HypothesisState::Rejected);
    assert_column(&c, &[("IA2", ConfirmatoryAnalysis), ("Updated", UpdatedAnalysis)]);
    let d = designate(&c).unwrap();
    assert_eq!(d.reporting_label("Primary"), Some(NotConducted));
    assert_eq!(d.decisive.as_deref(), Some("IA2"));
}

#[test]
fn outcome_stop_at_primary() {
    for (hr, state) in [
        (0.8, HypothesisState::Rejected),
        (0.9, HypothesisState::RetainedAtPrimary),
    ] {
        let c = run(&[
            look("IA1", 6, 130, 0.9),
            look("IA2", 20, 257, 0.85),
            look("Primary", 40, 385, hr),
        ]);
        assert_eq!(c.hypothesis_state, state);
        assert_eq!(c.analyses[2].decision, Some(Decision::ReachPrimary));
        assert_column(&c, &[("Primary", ConfirmatoryAnalysis), ("Updated", UpdatedAnalysis)]);
    }
}

#[test]
fn no_second_test_after_rejection() {
    let c = run(&[look("IA1", 6, 130, 0.9), look("IA2", 20, 255, 0.689)]);
    assert!(matches!(c.record(look("Primary", 40, 385, 0.7)), Err(Error::Contract(_))));
    let (c, eval) = c.record(look("Updated", 60, 500, 0.7).update()).unwrap();
    assert!(eval.is_none());
    assert_eq!(c.analyses.len(), 3);
    assert_eq!(designate(&c).unwrap().reporting_label("Updated"), Some(UpdatedAnalysis));
}

#[test]
fn update_requires_a_settled_hypothesis() {
    assert!(matches!(
        course().record(look("Updated", 6, 130, 0.9).update()),
        Err(Error::Contract(_))
    ));
}

#[test]
fn delayed_primary_is_refused() {
    let c = run(&[look("IA1", 6, 130, 0.9), look("IA2", 20, 257, 0.85)]);
    let mut rec = look("Primary", 50, 420, 0.8);
    rec.deliberately_delayed = true;
    assert!(matches!(c.record(rec), Err(Error::Contract(_))));
}

#[test]
fn overruled_futility_keeps_the_course_open() {
    let c = course()
        .record(look("IA1", 6, 132, 1.07).overrule_futility())
        .unwrap()
        .0;
    assert!(c.is_open());
    assert!(c.analyses[0].futility_recommended);
    assert_eq!(c.analyses[0].decision, Some(Decision::Continue));
    assert!(matches!(designate(&c), Err(Error::IncompleteCourse)));
    let partial = designate_partial(&c);
    assert!(partial.entries.iter().all(|e| !e.reporting_label.is_named()));
}

#[test]
fn snapshot_before_cutoff_is_refused() {
    let mut rec = look("IA1", 6, 130, 0.9);
    rec.ssd = rec.ccod - chrono::Days::new(1);
    assert!(matches!(course().record(rec), Err(Error::Contract(_))));
}

#[test]
fn out_of_order_and_unknown_analyses_are_refused() {
    let c = run(&[look("IA1", 6, 130, 0.9), look("IA2", 20, 257, 0.85)]);
    assert!(c.record(look("IA1x", 30, 300, 0.9)).is_err());
    assert!(matches!(c.record(look("Primary", 40, 250, 0.8)), Err(Error::Contract(_))));
    let c = course();
    assert!(matches!(c.record(look("Nope", 3, 100, 0.9)), Err(Error::UnknownLabel(_))));
}

#[test]
fn decisive_flag_rules() {
    let c = run(&[look("IA1", 6, 130, 0.9), look("IA2", 20, 255, 0.689)]);
    let d = designate(&c).unwrap();
    assert!(d.mark_decisive("IA1").is_err());
    assert!(d.mark_decisive("Primary").is_err());
    // The planned update is not yet conducted.
    assert!(d.mark_decisive("Updated").is_err());

    let c = c.record(look("Updated", 60, 500, 0.7).update()).unwrap().0;
    let c = c.mark_decisive("Updated").unwrap();
    assert_eq!(c.designations.as_ref().unwrap().decisive.as_deref(), Some("Updated"));

    let futile = run(&[look("IA1", 6, 132, 1.07)]);
    assert!(futile.mark_decisive("IA1").is_err());
}

#[test]
fn course_json_round_trip() {
    let c = run(&[look("IA1", 6, 130, 0.9), look("IA2", 20, 255, 0.689)]);
    let json = serde_json::to_value(&c).unwrap();
    for key in ["design", "boundary_table", "analyses", "hypothesis_state", "designations"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    let a = &json["analyses"][1];
    for key in ["label", "ccod", "ssd", "observed_events", "observed_hr", "recalculated", "decision"] {
        assert!(a.get(key).is_some(), "{key}");
    }
    assert!(a["recalculated"].get("alpha_1sided").is_some());
    assert_eq!(a["decision"], "stop_efficacy");
    assert_eq!(a["ccod"], "2022-09-01");
    let back: TrialCourse = serde_json::from_value(json).unwrap();
    assert_eq!(back, c);
    back.validate().unwrap();
}

#[test]
fn validate_catches_inconsistent_state() {
    let mut c = run(&[look("IA1", 6, 130, 0.9), look("IA2", 20, 255, 0.689)]);
    c.hypothesis_state = HypothesisState::Open;
    assert!(c.validate().is_err());
}

#[derive(Debug, Clone, Copy)]
enum Step {
    Continue,
    Futility,
    Overrule,
    Efficacy,
}

fn ia_hr(step: Step, futility_hr: f64) -> (f64, bool) {
    match step {
        Step::Continue => (futility_hr - 0.05, false),
        Step::Futility => (futility_hr + 0.05, false),
        Step::Overrule => (futility_hr + 0.05, true),
        Step::Efficacy => (0.6, false),
    }
}

fn play(ia1: Step, ia2: Step, primary_hr: f64, jitter: u32) -> TrialCourse {
    let mut c = course();
    let plan = [("IA1", 129 + jitter, 6, ia1, 1.0), ("IA2", 250 + jitter, 20, ia2, 0.9)];
    for (label, events, month, step, thr) in plan {
        if !c.is_open() {
            return c;
        }
        let (hr, overrule) = ia_hr(step, thr);
        let mut rec = look(label, month, events, hr);
        if overrule {
            rec = rec.overrule_futility();
        }
        c = c.record(rec).unwrap().0;
    }
    if c.is_open() {
        c = c.record(look("Primary", 40, 380 + jitter, primary_hr)).unwrap().0;
    }
    c
}

fn check_invariants(c: &TrialCourse) {
    assert!(!c.is_open());
    let d = designate(c).unwrap();
    let confirmatory = d
        .entries
        .iter()
        .filter(|e| e.reporting_label == ConfirmatoryAnalysis)
        .count();
    let futility = c.hypothesis_state == HypothesisState::AbandonedFutility;
    assert_eq!(confirmatory, usize::from(!futility));
    assert_eq!(d.decisive.is_some(), !futility);
    let stops = c
        .analyses
        .iter()
        .filter(|a| a.decision == Some(Decision::StopEfficacy))
        .count();
    assert!(stops <= 1);
    for e in &d.entries {
        let text = e.reporting_label.to_string();
        assert!(!text.contains("interim") && !text.contains("primary"), "{text}");
        if e.reporting_label == FutilityAnalysis || e.reporting_label == ConfirmatoryAnalysis {
            assert!(e.conducted);
        }
    }
    c.validate().unwrap();
}

#[test]
fn every_decision_path_designates() {
    let ia1 = [Step::Continue, Step::Futility, Step::Overrule];
    let ia2 = [Step::Continue, Step::Futility, Step::Overrule, Step::Efficacy];
    for a in ia1 {
        for b in ia2 {
            for p in [0.75, 0.95] {
                check_invariants(&play(a, b, p, 0));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn designation_invariants_hold(
        a in 0usize..3,
        b in 0usize..4,
        primary_hr in 0.6f64..1.2,
        jitter in 0u32..10,
    ) {
        let ia1 = [Step::Continue, Step::Futility, Step::Overrule][a];
        let ia2 = [Step::Continue, Step::Futility, Step::Overrule, Step::Efficacy][b];
        check_invariants(&play(ia1, ia2, primary_hr, jitter));
    }
}
