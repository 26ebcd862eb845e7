//! Acceptance suite for the hypothetical trial.
//!
//! Runs without the libtest harness so that every criterion prints one
//! PASS/FAIL line even when the run succeeds. Exits non-zero on any failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chrono::{Days, NaiveDate};
use gsd_cli::config::ConfigDocument;
use gsd_cli::report::{lint, render, ReportOptions};
use gsd_core::design::{
    fixed_design_events, minimal_detectable_difference, required_max_events, table_power, BoundaryTable,
    DesignSpec,
};
use gsd_core::inference::{estimate, naive_hr_ci, StoppedTrialDatum};
use gsd_core::monitoring::{
    designate, recalc_interim_level, AnalysisRecord, Decision, HypothesisState,
    ObservedEffect, ReportingLabel, TrialCourse,
};
use gsd_core::numerics::norm_cdf;
use gsd_core::sim::{aggregate, simulate, McEstimate, SimConfig, SimOutcome};
use gsd_core::timing::predicted_schedule;

const TRIALS: u64 = 100_000;

type Outcome = Result<String, String>;

struct Check {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Self { failures: Vec::new(), notes: Vec::new() }
    }

    fn within(&mut self, what: &str, got: f64, want: f64, tol: f64) {
        let ok = (got - want).abs() <= tol;
        let note = format!("{what} {got:.5} (want {want} ± {tol})");
        if ok {
            self.notes.push(note);
        } else {
            self.failures.push(note);
        }
    }

    fn that(&mut self, what: impl Into<String>, ok: bool) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }

    fn finish(self, elapsed: Duration, limit: Option<Duration>) -> Outcome {
        let mut failures = self.failures;
        if let Some(limit) = limit {
            if elapsed > limit {
                failures.push(format!("runtime {:.2}s exceeds {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()));
            }
        }
        if failures.is_empty() {
            Ok(self.notes.join("; "))
        } else {
            Err(failures.join("; "))
        }
    }
}

fn config_doc() -> ConfigDocument {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/hypothetical.json");
    ConfigDocument::load(&path).expect("example configuration loads")
}

fn table() -> BoundaryTable {
    config_doc().boundary_table().expect("boundary table")
}

fn sim_config(hr_true: f64, honor_futility: bool, perturbation: Option<f64>, seed: u64) -> SimConfig {
    let doc = config_doc();
    let mut c = SimConfig::new(doc.design_spec(), table(), doc.model().unwrap(), hr_true, TRIALS, seed)
        .honor_futility(honor_futility);
    c.event_perturbation = perturbation;
    c
}

fn timed(f: impl FnOnce(&mut Check), limit: Option<Duration>) -> Outcome {
    let start = Instant::now();
    let mut check = Check::new();
    f(&mut check);
    let elapsed = start.elapsed();
    check.note(format!("{:.2}s", elapsed.as_secs_f64()));
    check.finish(elapsed, limit)
}

fn fixed_design() -> Outcome {
    timed(
        |c| {
            let d = fixed_design_events(0.025, 0.80, 0.75, 1.0).unwrap();
            c.that(format!("fixed design events {d}, want 380"), d == 380);
            c.note(format!("fixed design events {d}"));
            c.within("MDD", minimal_detectable_difference(380.0, 0.025, 1.0).unwrap(), 0.8177, 0.0005);
        },
        Some(Duration::from_secs(1)),
    )
}

fn boundary_table() -> Outcome {
    timed(
        |c| {
            let max = required_max_events(&DesignSpec::hypothetical_trial()).unwrap();
            c.that(format!("max events {max}, want 385"), max == 385);
            let t = table();
            let targets: Vec<u32> = t.rows.iter().map(|r| r.target_events).collect();
            c.that(format!("targets {targets:?}, want [129, 257, 385]"), targets == [129, 257, 385]);
            c.note(format!("max events {max}, targets {targets:?}"));
            for (label, level, hr) in [("IA2", 0.012, 0.731), ("Primary", 0.046, 0.816)] {
                let row = t.row(label).unwrap();
                c.within(&format!("{label} two-sided level"), row.nominal_level_two_sided().unwrap(), level, 0.0005);
                c.within(&format!("{label} HR bound"), row.efficacy_hr_bound.unwrap(), hr, 0.001);
            }
        },
        Some(Duration::from_secs(5)),
    )
}

fn timing() -> Outcome {
    timed(
        |c| {
            let doc = config_doc();
            let plan = predicted_schedule(&doc.model().unwrap(), &table(), doc.updated_analysis.as_ref()).unwrap();
            let months = [19.7, 35.6, 54.8, 76.4];
            let follow = [7.7, 23.6, 42.8, 64.4];
            c.that(format!("{} scheduled analyses, want 4", plan.len()), plan.len() == 4);
            for (a, (m, f)) in plan.iter().zip(months.iter().zip(follow)) {
                c.within(&format!("{} month", a.label), a.month, *m, 0.3);
                c.within(&format!("{} follow-up", a.label), a.minimal_followup_months, f, 0.3);
            }
        },
        Some(Duration::from_secs(1)),
    )
}

fn overrunning() -> Outcome {
    timed(
        |c| {
            let b = recalc_interim_level(&table(), "IA2", 255, &[]).unwrap();
            c.within("two-sided level at 255", b.nominal_level_two_sided(), 0.0117, 0.0005);
            c.within("HR bound at 255", b.hr, 0.729, 0.001);
        },
        Some(Duration::from_secs(1)),
    )
}

fn futility_power(sim: &[SimOutcome], config: &SimConfig) -> Outcome {
    timed(
        |c| {
            let t = table();
            let with = table_power(&t, 0.75, true).unwrap();
            let without = table_power(&t, 0.75, false).unwrap();
            c.within("analytic power, futility honoured", with, 0.78, 0.005);
            c.within("analytic power, futility ignored", without, 0.80, 0.005);
            let oc = aggregate(config, sim);
            let ok = oc.rejection.agrees_with(with, 3.0);
            let note = format!(
                "simulated power {:.5} (MC SE {:.5}, {} trials) vs analytic {with:.5}",
                oc.rejection.mean, oc.rejection.se, oc.n_trials
            );
            c.that(format!("{note} differs by more than 3 SE"), ok);
            c.note(note);
        },
        None,
    )
}

fn efficacy_stop_course() -> TrialCourse {
    let doc = config_doc();
    let start = NaiveDate::from_ymd_opt(2020, 4, 23).unwrap();
    let ia1 = NaiveDate::from_ymd_opt(2021, 11, 1).unwrap();
    let ia2 = NaiveDate::from_ymd_opt(2023, 4, 10).unwrap();
    TrialCourse::new(doc.design_spec(), table())
        .unwrap()
        .with_updated_analyses(doc.updated_labels())
        .with_first_patient_in(start)
        .record(AnalysisRecord::new("IA1", ia1, ia1 + Days::new(32), 132, ObservedEffect::HazardRatio(0.93)))
        .unwrap()
        .0
        .record(AnalysisRecord::new("IA2", ia2, ia2 + Days::new(50), 255, ObservedEffect::HazardRatio(0.689)))
        .unwrap()
        .0
}

fn adjusted_inference() -> Outcome {
    timed(
        |c| {
            let course = efficacy_stop_course();
            c.that("efficacy stop course rejects at IA2", course.hypothesis_state == HypothesisState::Rejected);
            let est = estimate(&StoppedTrialDatum::from_course(&course).unwrap(), 0.05).unwrap();
            c.within("median-unbiased HR", est.adjusted.hr, 0.691, 0.005);
            c.within("adjusted lower", est.adjusted.lower, 0.540, 0.005);
            c.within("adjusted upper", est.adjusted.upper, 0.883, 0.005);

            let mut worst = 0.0f64;
            for (z, events) in [(2.1, 380), (0.3, 150), (-1.2, 90), (3.4, 500)] {
                let e = estimate(&StoppedTrialDatum::single_look(z, events, 1.0).unwrap(), 0.05).unwrap();
                let naive = naive_hr_ci((-z / (events as f64 / 4.0).sqrt()).exp(), events as f64, 0.05, 1.0).unwrap();
                for (a, b) in [
                    (e.adjusted.hr, naive.hr),
                    (e.adjusted.lower, naive.lower),
                    (e.adjusted.upper, naive.upper),
                ] {
                    worst = worst.max((a - b).abs());
                }
            }
            c.that(format!("single-look collapse off by {worst:e}"), worst <= 1e-9);
            c.note(format!("single-look collapse within {worst:.1e}"));
        },
        Some(Duration::from_secs(5)),
    )
}

fn type_one_error(sim: &[SimOutcome], config: &SimConfig, elapsed: Duration) -> Outcome {
    let oc = aggregate(config, sim);
    let limit = 0.025 + 3.0 * oc.rejection.se;
    let mut c = Check::new();
    let note = format!(
        "null rejection {:.5} (MC SE {:.5}, {} trials, events within ±15%), limit {limit:.5}",
        oc.rejection.mean, oc.rejection.se, oc.n_trials
    );
    c.that(note.clone(), oc.rejection.mean <= limit);
    c.note(note);
    let perturbed = sim
        .iter()
        .flat_map(|o| o.analyses.iter())
        .filter(|a| a.label == "IA2")
        .any(|a| a.events != 257);
    c.that("event counts were not perturbed", perturbed);
    c.note(format!("{:.1}s", elapsed.as_secs_f64()));
    c.finish(elapsed, Some(Duration::from_secs(300)))
}

fn date(days: u64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 1, 1).unwrap() + Days::new(days)
}

fn look(label: &str, day: u64, events: u32, hr: f64) -> AnalysisRecord {
    AnalysisRecord::new(label, date(day), date(day + 28), events, ObservedEffect::HazardRatio(hr))
}

/// Every decision path of the hypothetical trial, each followed by the
/// pre-specified updated analysis where the course allows one.
fn all_courses() -> Vec<(String, TrialCourse)> {
    let base = TrialCourse::new(config_doc().design_spec(), table())
        .unwrap()
        .with_updated_analyses(vec!["Updated".into()]);
    let ia1 = [("continue", 0.9, false), ("futility", 1.07, false), ("overruled", 1.07, true)];
    let ia2 = [
        ("efficacy", 0.689, false),
        ("futility", 0.95, false),
        ("overruled", 0.95, true),
        ("continue", 0.85, false),
    ];
    let primary = [("rejected", 0.8), ("retained", 0.9)];
    let mut out = Vec::new();
    let settle = |name: String, c: TrialCourse, out: &mut Vec<(String, TrialCourse)>| {
        let next = c.analyses.len() as u64 * 400;
        let primary_done = c.analysis("Primary").is_some();
        let mut c = c;
        if !primary_done && c.hypothesis_state == HypothesisState::AbandonedFutility {
            c = c.record(look("Primary", next, 385, 1.0).update()).unwrap().0;
        }
        let with_update = c.record(look("Updated", next + 400, 500, 0.8).update()).unwrap().0;
        out.push((name.clone(), c));
        out.push((format!("{name}, then updated"), with_update));
    };
    for (n1, hr1, over1) in ia1 {
        let mut r1 = look("IA1", 0, 130, hr1);
        if over1 {
            r1 = r1.overrule_futility();
        }
        let c1 = base.record(r1).unwrap().0;
        if !c1.is_open() {
            settle(format!("IA1 {n1}"), c1, &mut out);
            continue;
        }
        for (n2, hr2, over2) in ia2 {
            let mut r2 = look("IA2", 400, 255, hr2);
            if over2 {
                r2 = r2.overrule_futility();
            }
            let c2 = c1.record(r2).unwrap().0;
            if !c2.is_open() {
                settle(format!("IA1 {n1}, IA2 {n2}"), c2, &mut out);
                continue;
            }
            for (n3, hr3) in primary {
                let c3 = c2.record(look("Primary", 800, 385, hr3)).unwrap().0;
                settle(format!("IA1 {n1}, IA2 {n2}, primary {n3}"), c3, &mut out);
            }
        }
    }
    out
}

fn designation() -> Outcome {
    use ReportingLabel::*;
    timed(
        |c| {
            let columns: [(&str, &[(&str, ReportingLabel)]); 4] = [
                ("IA1 futility", &[("IA1", FutilityAnalysis), ("Primary", UpdatedAnalysis)]),
                ("IA1 continue, IA2 futility", &[("IA2", FutilityAnalysis), ("Primary", UpdatedAnalysis)]),
                ("IA1 continue, IA2 efficacy, then updated", &[
                    ("IA2", ConfirmatoryAnalysis),
                    ("Updated", UpdatedAnalysis),
                ]),
                ("IA1 continue, IA2 continue, primary rejected, then updated", &[
                    ("Primary", ConfirmatoryAnalysis),
                    ("Updated", UpdatedAnalysis),
                ]),
            ];
            let courses = all_courses();
            for (name, want) in columns {
                let Some((_, course)) = courses.iter().find(|(n, _)| n == name) else {
                    c.that(format!("outcome `{name}` not enumerated"), false);
                    continue;
                };
                for e in designate(course).unwrap().entries {
                    let expected = want.iter().find(|(l, _)| *l == e.label).map(|(_, r)| *r);
                    let ok = match expected {
                        Some(r) => e.reporting_label == r,
                        None => !e.reporting_label.is_named(),
                    };
                    c.that(format!("{name}: {} labelled `{}`", e.label, e.reporting_label), ok);
                }
            }
            let mut reports = 0;
            for (name, course) in &courses {
                let d = designate(course).unwrap();
                let confirmatory = d
                    .entries
                    .iter()
                    .filter(|e| e.reporting_label == ConfirmatoryAnalysis)
                    .count();
                c.that(format!("{name}: {confirmatory} confirmatory analyses"), confirmatory <= 1);
                let text = render(course, ReportOptions::default()).unwrap();
                if let Err(terms) = lint(&text) {
                    c.that(format!("{name}: report uses {terms:?}"), false);
                }
                if let Some(a) = course.settling_analysis() {
                    let named = d.reporting_label(&a.label).unwrap_or(NoReportingRole);
                    let heading = format!("{named} (planned as {})", a.label).to_lowercase();
                    c.that(
                        format!("{name}: report does not head {} as `{named}`", a.label),
                        text.to_lowercase().contains(&heading),
                    );
                }
                reports += 1;
            }
            c.note(format!("4 outcome columns match; {} courses designated and {reports} reports linted", courses.len()));
        },
        None,
    )
}

fn ks_statistic(mut sample: Vec<f64>) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = norm_cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

fn null_distribution(sim: &[SimOutcome]) -> Outcome {
    timed(
        |c| {
            let ia1: Vec<_> = sim
                .iter()
                .map(|o| o.analyses.iter().find(|a| a.label == "IA1").expect("IA1 is always conducted"))
                .collect();
            let z: Vec<f64> = ia1.iter().map(|a| a.z).collect();
            let n = z.len() as f64;
            let d = ks_statistic(z.clone());
            // 1% critical value of the one-sample Kolmogorov-Smirnov test.
            let crit = 1.628 / n.sqrt();
            c.that(format!("IA1 z KS statistic {d:.5} exceeds {crit:.5}"), d <= crit);
            c.note(format!("IA1 z KS statistic {d:.5} (1% critical {crit:.5})"));
            let mean = McEstimate::sample_mean(&z);
            c.that(format!("IA1 z mean {:.4} (SE {:.4})", mean.mean, mean.se), mean.agrees_with(0.0, 3.0));
            let futile = McEstimate::proportion(ia1.iter().filter(|a| a.futility_recommended).count() as u64, ia1.len() as u64);
            let note = format!("futility at IA1 {:.5} (MC SE {:.5})", futile.mean, futile.se);
            c.that(format!("{note} differs from 0.5 by more than 3 SE"), futile.agrees_with(0.5, 3.0));
            c.note(note);
            let stopped = sim
                .iter()
                .filter(|o| o.stopping().label == "IA1" && o.stopping().decision == Decision::StopFutility)
                .count();
            c.that("futility recommendations and stops disagree", stopped as u64 == (futile.mean * n).round() as u64);
        },
        None,
    )
}

fn run_sim(config: &SimConfig) -> (Vec<SimOutcome>, Duration) {
    let start = Instant::now();
    let outcomes = simulate(config).expect("simulation runs");
    (outcomes, start.elapsed())
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, outcome: Outcome| {
        match &outcome {
            Ok(detail) => println!("criterion {n} {name}: PASS ({detail})"),
            Err(detail) => println!("criterion {n} {name}: FAIL ({detail})"),
        }
        results.push((n, name, outcome));
    };

    report(1, "fixed-design calibration", fixed_design());
    report(2, "boundary table", boundary_table());
    report(3, "timing", timing());
    report(4, "over- and underrunning", overrunning());

    let alt = sim_config(0.75, true, None, 20_251);
    let (alt_sim, alt_time) = run_sim(&alt);
    let mut power = futility_power(&alt_sim, &alt);
    let sim_limit = Duration::from_secs(120);
    if alt_time > sim_limit {
        power = Err(format!("simulation took {:.1}s, limit 120s", alt_time.as_secs_f64()));
    } else if let Ok(detail) = power {
        power = Ok(format!("{detail}; simulation {:.1}s", alt_time.as_secs_f64()));
    }
    report(5, "futility power loss", power);
    drop(alt_sim);

    report(6, "adjusted inference", adjusted_inference());

    let null = sim_config(1.0, false, Some(0.15), 7_919);
    let (null_sim, null_time) = run_sim(&null);
    report(7, "type-I error under perturbed information", type_one_error(&null_sim, &null, null_time));
    drop(null_sim);

    report(8, "designation state machine", designation());

    let null_plain = sim_config(1.0, true, None, 104_729);
    let (plain_sim, _) = run_sim(&null_plain);
    report(9, "null distribution at IA1", null_distribution(&plain_sim));

    let failed = results.iter().filter(|(_, _, o)| o.is_err()).count();
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
