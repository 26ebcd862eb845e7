//! Plain-text trial reports that use reporting-stage terms only.

use std::fmt::Write as _;

use gsd_core::design::BoundaryRow;
use gsd_core::inference::{estimate, naive_hr_ci, StoppedTrialDatum};
use gsd_core::monitoring::{
    Decision, HypothesisState, ObservedAnalysis, ReportingLabel, TrialCourse,
};
use gsd_core::timing::date_to_month_offset;

use crate::monitor::load_course;
use crate::{write_file, CliError, ReportArgs};

/// Phrases a report must never contain. Conducted analyses are named by
/// their reporting-stage role, never by their design-stage role.
pub const FORBIDDEN_TERMS: [&str; 3] = ["final analysis", "interim analysis", "primary analysis"];

/// Terminology check; returns the offending terms.
pub fn lint(text: &str) -> Result<(), Vec<&'static str>> {
    let lower = text.to_lowercase();
    let found: Vec<&'static str> = FORBIDDEN_TERMS
        .iter()
        .copied()
        .filter(|t| lower.contains(t))
        .collect();
    if found.is_empty() {
        Ok(())
    } else {
        Err(found)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReportOptions {
    /// Two-sided level of the confidence intervals.
    pub level: f64,
    pub two_sided_presentation: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            level: 0.05,
            two_sided_presentation: true,
        }
    }
}

struct Ctx<'a> {
    course: &'a TrialCourse,
    opts: ReportOptions,
}

impl Ctx<'_> {
    fn pct(&self) -> String {
        let p = (1.0 - self.opts.level) * 100.0;
        if (p - p.round()).abs() < 1e-9 {
            format!("{p:.0}%")
        } else {
            format!("{p}%")
        }
    }

    fn sided(&self) -> &'static str {
        if self.opts.two_sided_presentation {
            "two-sided"
        } else {
            "one-sided"
        }
    }

    fn level(&self, one_sided: f64) -> f64 {
        if self.opts.two_sided_presentation {
            2.0 * one_sided
        } else {
            one_sided
        }
    }

    fn dates(&self, a: &ObservedAnalysis) -> String {
        let months = self
            .course
            .first_patient_in
            .map(|fpi| {
                format!(
                    " ({:.1} months after first patient in on {fpi})",
                    date_to_month_offset(fpi, a.ccod)
                )
            })
            .unwrap_or_default();
        format!("Clinical cutoff date {}{months}; snapshot date {}.", a.ccod, a.ssd)
    }

    fn events(&self, a: &ObservedAnalysis, row: Option<&BoundaryRow>) -> String {
        let max = self.course.boundary_table.max_events;
        let observed = a.observed_events as f64 / max as f64;
        let planned = row
            .map(|r| format!(" against a planned {:.3}", r.information_fraction))
            .unwrap_or_default();
        let pipeline = a
            .pipeline_events
            .map(|p| format!(" A further {p} events were in the pipeline between cutoff and snapshot."))
            .unwrap_or_default();
        format!(
            "{} events had been observed at the cutoff, an information fraction of {observed:.3}{planned} ({max} events at full information).{pipeline}",
            a.observed_events
        )
    }

    fn naive(&self, a: &ObservedAnalysis) -> Result<String, CliError> {
        let ci = naive_hr_ci(
            a.observed_hr,
            a.observed_events as f64,
            self.opts.level,
            self.course.boundary_table.allocation_ratio,
        )?;
        Ok(format!(
            "Observed hazard ratio {:.3} (unadjusted {} CI {:.3} to {:.3}).",
            a.observed_hr,
            self.pct(),
            ci.lower,
            ci.upper
        ))
    }
}

fn row<'a>(course: &'a TrialCourse, label: &str) -> Option<&'a BoundaryRow> {
    course.boundary_table.row(label).ok()
}

fn capitalise(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

fn settling_section(ctx: &Ctx, a: &ObservedAnalysis, out: &mut String) -> Result<(), CliError> {
    let course = ctx.course;
    let r = row(course, &a.label);
    let futility = course.hypothesis_state == HypothesisState::AbandonedFutility;
    let name = if futility {
        ReportingLabel::FutilityAnalysis
    } else {
        ReportingLabel::ConfirmatoryAnalysis
    };
    let _ = writeln!(out, "{} (planned as {})", capitalise(&name.to_string()), a.label);

    let mut lines: Vec<String> = Vec::new();
    if let Some(r) = r {
        let mut plan = format!("Pre-specified at {} events", r.target_events);
        let mut criteria = Vec::new();
        if let Some(thr) = r.futility_hr_bound {
            criteria.push(format!("a futility threshold of HR {thr:.3}"));
        }
        if let (Some(hr), Some(lvl)) = (r.efficacy_hr_bound, r.nominal_level_one_sided) {
            criteria.push(format!(
                "an efficacy threshold of HR {hr:.3} ({} nominal level {:.4})",
                ctx.sided(),
                ctx.level(lvl)
            ));
        }
        if !criteria.is_empty() {
            plan.push_str(" with ");
            plan.push_str(&criteria.join(" and "));
        }
        plan.push('.');
        lines.push(plan);
    }
    lines.push(ctx.dates(a));
    lines.push(ctx.events(a, r));

    if let (Some(b), Some(r)) = (a.recalculated, r) {
        let changed = r.efficacy_z_bound != Some(b.z);
        if changed {
            let planned = r
                .efficacy_hr_bound
                .map(|h| format!(" from {h:.3}"))
                .unwrap_or_default();
            lines.push(format!(
                "For the observed information the {} nominal level was recalculated to {:.4}, which moves the hazard-ratio threshold{planned} to {:.3}.",
                ctx.sided(),
                ctx.level(b.nominal_level_one_sided),
                b.hr
            ));
        } else {
            lines.push("The observed information matched the plan, so the pre-specified bound applied unchanged.".into());
        }
    }
    lines.push(ctx.naive(a)?);

    let verdict = match (a.decision, course.hypothesis_state) {
        (Some(Decision::StopFutility), _) => {
            "The futility criterion was met and the trial stopped for futility; the null hypothesis was not rejected."
        }
        (Some(Decision::StopEfficacy), _) => {
            "The efficacy bound was crossed and the trial stopped for efficacy; the null hypothesis was rejected."
        }
        (_, HypothesisState::Rejected) => "The efficacy bound was crossed; the null hypothesis was rejected.",
        _ => "The efficacy bound was not crossed; the null hypothesis was not rejected.",
    };
    lines.push(verdict.into());
    for l in lines {
        let _ = writeln!(out, "  {l}");
    }

    if course.hypothesis_state == HypothesisState::Rejected {
        let datum = StoppedTrialDatum::from_course(course)?;
        let est = estimate(&datum, ctx.opts.level)?;
        let _ = writeln!(out);
        let _ = writeln!(out, "Estimation");
        let _ = writeln!(
            out,
            "  Accounting for the group-sequential design under the stagewise ordering, the median-unbiased hazard ratio is {:.3} with adjusted {} CI {:.3} to {:.3}.",
            est.adjusted.hr,
            ctx.pct(),
            est.adjusted.lower,
            est.adjusted.upper
        );
        let _ = writeln!(
            out,
            "  The naive estimate on the same scale is {:.3} (unadjusted CI {:.3} to {:.3}).",
            est.naive.hr, est.naive.lower, est.naive.upper
        );
    }
    Ok(())
}

fn earlier_section(ctx: &Ctx, settling: &ObservedAnalysis, out: &mut String) {
    let earlier: Vec<&ObservedAnalysis> = ctx
        .course
        .analyses
        .iter()
        .take_while(|a| a.label != settling.label)
        .collect();
    if earlier.is_empty() {
        return;
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Earlier analyses");
    for a in earlier {
        let futility = match row(ctx.course, &a.label).and_then(|r| r.futility_hr_bound) {
            Some(thr) if a.futility_recommended => {
                format!("; futility threshold HR {thr:.3} met, recommendation overruled")
            }
            Some(thr) => format!("; futility threshold HR {thr:.3} not met"),
            None => String::new(),
        };
        let efficacy = a
            .recalculated
            .map(|b| format!("; efficacy threshold HR {:.3} not crossed", b.hr))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "  Planned as {}: cutoff {}, {} events, hazard ratio {:.3}{futility}{efficacy}.",
            a.label, a.ccod, a.observed_events, a.observed_hr
        );
    }
}

fn updates_section(ctx: &Ctx, out: &mut String) -> Result<(), CliError> {
    let Some(d) = &ctx.course.designations else {
        return Ok(());
    };
    let updates: Vec<_> = d
        .entries
        .iter()
        .filter(|e| e.reporting_label == ReportingLabel::UpdatedAnalysis)
        .collect();
    if updates.is_empty() {
        return Ok(());
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Updated analyses");
    for e in updates {
        match ctx.course.analysis(&e.label) {
            Some(a) => {
                let _ = writeln!(
                    out,
                    "  Planned as {}: cutoff {}, snapshot {}, {} events. {}",
                    a.label,
                    a.ccod,
                    a.ssd,
                    a.observed_events,
                    ctx.naive(a)?
                );
            }
            None => {
                let _ = writeln!(out, "  Planned as {}: not yet conducted.", e.label);
            }
        }
    }
    Ok(())
}

fn designation_section(course: &TrialCourse, out: &mut String) {
    let Some(d) = &course.designations else {
        return;
    };
    let _ = writeln!(out);
    let _ = writeln!(out, "Design-stage plan and reporting-stage names");
    let width = d.entries.iter().map(|e| e.label.len()).max().unwrap_or(0);
    for e in &d.entries {
        let name = match e.reporting_label {
            ReportingLabel::NoReportingRole => "conducted, no reporting role".to_string(),
            l => l.to_string(),
        };
        let decisive = if d.decisive.as_deref() == Some(e.label.as_str()) {
            ", decisive"
        } else {
            ""
        };
        let _ = writeln!(out, "  {:<width$}  {name}{decisive}", e.label);
    }
}

fn open_summary(ctx: &Ctx, out: &mut String) -> Result<(), CliError> {
    let course = ctx.course;
    let _ = writeln!(out, "Status: ongoing; the null hypothesis has not been settled.");
    for a in &course.analyses {
        let r = row(course, &a.label);
        let _ = writeln!(out);
        let _ = writeln!(out, "Analysis planned as {}", a.label);
        let _ = writeln!(out, "  {}", ctx.dates(a));
        let _ = writeln!(out, "  {}", ctx.events(a, r));
        if let Some(b) = a.recalculated {
            let _ = writeln!(
                out,
                "  Efficacy threshold HR {:.3} ({} nominal level {:.4}) not crossed.",
                b.hr,
                ctx.sided(),
                ctx.level(b.nominal_level_one_sided)
            );
        }
        if let Some(thr) = r.and_then(|r| r.futility_hr_bound) {
            let status = if a.futility_recommended { "met, recommendation overruled" } else { "not met" };
            let _ = writeln!(out, "  Futility threshold HR {thr:.3} {status}.");
        }
        let _ = writeln!(out, "  {}", ctx.naive(a)?);
    }
    if let Some(next) = course
        .boundary_table
        .rows
        .iter()
        .find(|r| course.analysis(&r.label).is_none())
    {
        let _ = writeln!(out);
        let _ = writeln!(out, "Next planned analysis: {} at {} events.", next.label, next.target_events);
    }
    Ok(())
}

pub fn render(course: &TrialCourse, opts: ReportOptions) -> Result<String, CliError> {
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(CliError::Config(format!("level must lie in (0, 1), got {}", opts.level)));
    }
    let ctx = Ctx { course, opts };
    let mut out = String::new();
    let _ = writeln!(out, "Trial report: {}", capitalise(&course.endpoint));
    let _ = writeln!(out);
    match course.settling_analysis() {
        None => open_summary(&ctx, &mut out)?,
        Some(settling) => {
            settling_section(&ctx, settling, &mut out)?;
            earlier_section(&ctx, settling, &mut out);
            updates_section(&ctx, &mut out)?;
            designation_section(course, &mut out);
        }
    }
    if let Err(terms) = lint(&out) {
        return Err(CliError::Lint(format!(
            "report would contain design-stage wording: {}",
            terms.join(", ")
        )));
    }
    Ok(out)
}

pub fn run(args: &ReportArgs) -> Result<String, CliError> {
    let course = load_course(&args.course)?;
    let text = render(
        &course,
        ReportOptions {
            level: args.level,
            two_sided_presentation: !args.one_sided,
        },
    )?;
    if let Some(dir) = &args.out {
        write_file(dir, "report.txt", &text)?;
    }
    Ok(text)
}
