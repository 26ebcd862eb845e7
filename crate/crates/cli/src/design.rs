use gsd_core::design::{fixed_design_events, table_power, BoundaryTable};
use gsd_core::timing::{predicted_schedule, ScheduledAnalysis};

use crate::config::ConfigDocument;
use crate::{cell, csv_string, text_table, write_file, CliError, DesignArgs, Format};

pub const DESIGN_CSV_HEADER: [&str; 8] = [
    "label",
    "information_fraction",
    "target_events",
    "predicted_month",
    "futility_hr",
    "nominal_alpha_2sided",
    "efficacy_z",
    "efficacy_hr",
];

/// Predicted months where reachable; `None` when a target exceeds the
/// expected asymptote.
fn schedule(doc: &ConfigDocument, table: &BoundaryTable) -> Result<Vec<Option<f64>>, CliError> {
    let model = doc.model()?;
    let mut months: Vec<Option<f64>> = table
        .rows
        .iter()
        .map(|r| gsd_core::timing::ccod_for_events(&model, r.target_events).ok())
        .collect();
    if let Some(rule) = &doc.updated_analysis {
        let full: Result<Vec<ScheduledAnalysis>, _> = predicted_schedule(&model, table, Some(rule));
        months.push(full.ok().and_then(|s| s.last().map(|a| a.month)));
    }
    Ok(months)
}

pub fn design_csv(doc: &ConfigDocument, table: &BoundaryTable) -> Result<String, CliError> {
    let months = schedule(doc, table)?;
    let mut rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .zip(&months)
        .map(|(r, m)| {
            vec![
                r.label.clone(),
                r.information_fraction.to_string(),
                r.target_events.to_string(),
                cell(*m),
                cell(r.futility_hr_bound),
                cell(r.nominal_level_two_sided()),
                cell(r.efficacy_z_bound),
                cell(r.efficacy_hr_bound),
            ]
        })
        .collect();
    if let Some(rule) = &doc.updated_analysis {
        let mut row = vec![String::new(); DESIGN_CSV_HEADER.len()];
        row[0] = rule.label.clone();
        row[2] = rule.target_events.to_string();
        row[3] = cell(*months.last().unwrap_or(&None));
        rows.push(row);
    }
    csv_string(&DESIGN_CSV_HEADER, &rows)
}

pub fn design_text(doc: &ConfigDocument, table: &BoundaryTable) -> Result<String, CliError> {
    let months = schedule(doc, table)?;
    let two_sided = doc.reporting.two_sided_presentation;
    let fmt = |x: Option<f64>, digits: usize| x.map(|v| format!("{v:.digits$}")).unwrap_or_default();
    let mut rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .zip(&months)
        .map(|(r, m)| {
            let level = if two_sided { r.nominal_level_two_sided() } else { r.nominal_level_one_sided };
            vec![
                r.label.clone(),
                r.target_events.to_string(),
                format!("{:.3}", r.information_fraction),
                fmt(*m, 1),
                fmt(r.futility_hr_bound, 3),
                fmt(level, 4),
                fmt(r.efficacy_z_bound, 3),
                fmt(r.efficacy_hr_bound, 3),
            ]
        })
        .collect();
    if let Some(rule) = &doc.updated_analysis {
        let mut row = vec![String::new(); 8];
        row[0] = rule.label.clone();
        row[1] = rule.target_events.to_string();
        row[3] = fmt(*months.last().unwrap_or(&None), 1);
        rows.push(row);
    }
    let level_header = if two_sided { "Nominal level (2-sided)" } else { "Nominal level (1-sided)" };
    let header = [
        "Analysis",
        "Events",
        "Info fraction",
        "Month",
        "Futility HR",
        level_header,
        "Efficacy z",
        "Efficacy HR",
    ];

    let spec = doc.design_spec();
    let fixed = fixed_design_events(spec.alpha_one_sided, spec.power_target, spec.hr_alternative, spec.allocation_ratio)?;
    let power_plain = table_power(table, spec.hr_alternative, false)?;
    let power_futility = table_power(table, spec.hr_alternative, true)?;
    let mut out = String::new();
    out.push_str(&format!(
        "Design: one-sided alpha {}, target power {}, HR {} ({} spending, {} futility)\n",
        spec.alpha_one_sided,
        spec.power_target,
        spec.hr_alternative,
        "Lan-DeMets O'Brien-Fleming",
        if spec.binding_futility { "binding" } else { "non-binding" },
    ));
    out.push_str(&format!("Events for a fixed design: {fixed}\n"));
    out.push_str(&format!("Events for the group-sequential design: {}\n", table.max_events));
    out.push_str(&format!(
        "Power at HR {}: {:.4} ignoring futility, {:.4} with futility stops\n\n",
        spec.hr_alternative, power_plain, power_futility
    ));
    out.push_str(&text_table(&header, &rows));
    Ok(out)
}

pub fn run(args: &DesignArgs) -> Result<String, CliError> {
    let doc = ConfigDocument::load(&args.config)?;
    let table = doc.boundary_table()?;
    let csv = design_csv(&doc, &table)?;
    let text = design_text(&doc, &table)?;
    if let Some(dir) = &args.out {
        write_file(dir, "design.csv", &csv)?;
        write_file(dir, "design.txt", &text)?;
        let json = serde_json::to_string_pretty(&table).map_err(|e| CliError::Io(e.to_string()))?;
        write_file(dir, "boundary_table.json", &(json + "\n"))?;
    }
    Ok(match args.format {
        Format::Text => text,
        Format::Csv => csv,
    })
}
