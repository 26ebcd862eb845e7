use std::fmt::Write as _;
use std::path::Path;

use gsd_core::monitoring::{
    designate_partial, AnalysisRecord, Decision, Designation, Evaluation, FutilityAction, ObservedEffect,
    Purpose, TrialCourse,
};

use crate::config::{load_table, ConfigDocument};
use crate::{CliError, MonitorCommand, RecordArgs};

pub fn load_course(path: &Path) -> Result<TrialCourse, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let course: TrialCourse = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    course.validate()?;
    Ok(course)
}

pub fn save_course(path: &Path, course: &TrialCourse) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(course).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(path, json + "\n")
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn run(cmd: MonitorCommand) -> Result<String, CliError> {
    match cmd {
        MonitorCommand::Init { config, course, table, force } => {
            if course.exists() && !force {
                return Err(CliError::Io(format!(
                    "{} exists; pass --force to replace it",
                    course.display()
                )));
            }
            let doc = ConfigDocument::load(&config)?;
            let table = match table {
                Some(p) => load_table(&p)?,
                None => doc.boundary_table()?,
            };
            let mut c = TrialCourse::new(doc.design_spec(), table)?
                .with_updated_analyses(doc.updated_labels());
            c.endpoint = doc.reporting.endpoint.clone();
            c.first_patient_in = doc.reporting.first_patient_in_date;
            save_course(&course, &c)?;
            Ok(format!("Started course {} ({} planned analyses)\n", course.display(), c.boundary_table.rows.len()))
        }
        MonitorCommand::Record(args) => record(&args),
        MonitorCommand::Decisive { course, label } => {
            let c = load_course(&course)?.mark_decisive(&label)?;
            save_course(&course, &c)?;
            Ok(format!("Decisive analysis: {label}\n"))
        }
        MonitorCommand::Status { course } => Ok(status(&load_course(&course)?)),
    }
}

fn record(args: &RecordArgs) -> Result<String, CliError> {
    let course = load_course(&args.course)?;
    let effect = match (args.hr, args.z) {
        (Some(hr), None) => ObservedEffect::HazardRatio(hr),
        (None, Some(z)) => ObservedEffect::Z(z),
        _ => return Err(CliError::Config("give exactly one of --hr or --z".into())),
    };
    let rec = AnalysisRecord {
        label: args.label.clone(),
        ccod: args.ccod,
        ssd: args.ssd,
        observed_events: args.events,
        effect,
        purpose: if args.update { Purpose::Update } else { Purpose::Test },
        futility_action: if args.overrule_futility { FutilityAction::Overrule } else { FutilityAction::Follow },
        deliberately_delayed: args.delayed,
        pipeline_events: args.pipeline_events,
    };
    let (next, eval) = course.record(rec)?;
    save_course(&args.course, &next)?;
    Ok(describe_record(&next, eval.as_ref()))
}

fn describe_record(course: &TrialCourse, eval: Option<&Evaluation>) -> String {
    let a = course.analyses.last().expect("just recorded");
    let table = &course.boundary_table;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Recorded {}: {} events, cutoff {}, snapshot {}",
        a.label, a.observed_events, a.ccod, a.ssd
    );
    if let Some(p) = a.pipeline_events {
        let _ = writeln!(out, "Pipeline events between cutoff and snapshot: {p}");
    }
    let _ = writeln!(out, "Observed HR {:.4} (z {:.4})", a.observed_hr, a.observed_z);
    let Some(eval) = eval else {
        let _ = writeln!(out, "Estimation only; no hypothesis test.");
        out.push_str(&designation_lines(course.designations.as_ref()));
        return out;
    };
    if let Ok(row) = table.row(&a.label) {
        let _ = writeln!(
            out,
            "Information fraction {:.4} (planned {:.4}, {} of {} events)",
            a.observed_events as f64 / table.max_events as f64,
            row.information_fraction,
            row.target_events,
            table.max_events
        );
        if let Some(b) = eval.bound {
            let planned = row
                .efficacy_hr_bound
                .map(|h| format!(" (planned HR {h:.4})"))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "Recalculated efficacy bound: two-sided nominal level {:.6}, z {:.4}, HR {:.4}{planned}",
                b.nominal_level_two_sided(),
                b.z,
                b.hr
            );
        }
        if let Some(thr) = row.futility_hr_bound {
            let verdict = if eval.futility_met { "met" } else { "not met" };
            let _ = writeln!(out, "Futility criterion HR >= {thr:.3}: {verdict}");
            if eval.futility_met && a.decision != Some(Decision::StopFutility) {
                let _ = writeln!(out, "Futility recommendation overruled; the trial continues.");
            }
        }
    }
    let _ = writeln!(out, "Recommendation: {}", eval.recommendation);
    if let Some(d) = a.decision {
        let _ = writeln!(out, "Decision: {d}");
    }
    let _ = writeln!(out, "Hypothesis: {}", course.hypothesis_state);
    out.push_str(&designation_lines(course.designations.as_ref()));
    out
}

fn designation_lines(designation: Option<&Designation>) -> String {
    let Some(d) = designation else {
        return String::new();
    };
    let mut out = String::from("Designations:\n");
    let width = d.entries.iter().map(|e| e.label.len()).max().unwrap_or(0);
    for e in &d.entries {
        let name = if e.reporting_label.is_named() || !e.conducted {
            e.reporting_label.to_string()
        } else {
            "no reporting role".to_string()
        };
        let decisive = if d.decisive.as_deref() == Some(e.label.as_str()) { " (decisive)" } else { "" };
        let pending = if e.reporting_label.is_named() && !e.conducted { " (not yet conducted)" } else { "" };
        let _ = writeln!(out, "  {:<width$}  {name}{decisive}{pending}", e.label);
    }
    out
}

fn status(course: &TrialCourse) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Endpoint: {}", course.endpoint);
    let _ = writeln!(out, "Hypothesis: {}", course.hypothesis_state);
    for a in &course.analyses {
        let decision = a.decision.map_or_else(|| "update".to_string(), |d| d.to_string());
        let _ = writeln!(
            out,
            "  {}: {} events, cutoff {}, HR {:.4}, {decision}",
            a.label, a.observed_events, a.ccod, a.observed_hr
        );
    }
    if course.is_open() {
        let next = course
            .boundary_table
            .rows
            .iter()
            .find(|r| course.analysis(&r.label).is_none());
        if let Some(r) = next {
            let _ = writeln!(out, "Next planned analysis: {} at {} events", r.label, r.target_events);
        }
    } else {
        let d = course.designations.clone().unwrap_or_else(|| designate_partial(course));
        out.push_str(&designation_lines(Some(&d)));
    }
    out
}
