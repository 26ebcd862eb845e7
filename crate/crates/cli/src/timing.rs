use gsd_core::design::BoundaryTable;
use gsd_core::timing::{month_offset_to_date, predicted_schedule, ScheduledAnalysis};

use crate::config::{load_table, ConfigDocument};
use crate::{csv_string, text_table, write_file, CliError, Format, TimingArgs};

pub const SCHEDULE_CSV_HEADER: [&str; 5] = [
    "analysis",
    "target_events",
    "predicted_month",
    "predicted_date",
    "minimal_followup_months",
];

pub fn schedule(doc: &ConfigDocument, table: &BoundaryTable) -> Result<Vec<ScheduledAnalysis>, CliError> {
    Ok(predicted_schedule(&doc.model()?, table, doc.updated_analysis.as_ref())?)
}

fn date_cell(doc: &ConfigDocument, month: f64) -> String {
    doc.reporting
        .first_patient_in_date
        .map(|d| month_offset_to_date(d, month).to_string())
        .unwrap_or_default()
}

pub fn run(args: &TimingArgs) -> Result<String, CliError> {
    let doc = ConfigDocument::load(&args.config)?;
    let table = match &args.table {
        Some(path) => load_table(path)?,
        None => doc.boundary_table()?,
    };
    let plan = schedule(&doc, &table)?;

    let csv_rows: Vec<Vec<String>> = plan
        .iter()
        .map(|a| {
            vec![
                a.label.clone(),
                a.target_events.to_string(),
                a.month.to_string(),
                date_cell(&doc, a.month),
                a.minimal_followup_months.to_string(),
            ]
        })
        .collect();
    let csv = csv_string(&SCHEDULE_CSV_HEADER, &csv_rows)?;

    let text_rows: Vec<Vec<String>> = plan
        .iter()
        .map(|a| {
            vec![
                a.label.clone(),
                a.target_events.to_string(),
                format!("{:.1}", a.month),
                date_cell(&doc, a.month),
                format!("{:.1}", a.minimal_followup_months),
            ]
        })
        .collect();
    let mut text = match doc.reporting.first_patient_in_date {
        Some(d) => format!("Predicted cutoff dates, first patient in on {d}\n\n"),
        None => "Predicted cutoff months after first patient in\n\n".to_string(),
    };
    text.push_str(&text_table(
        &["Analysis", "Events", "Month", "Date", "Min follow-up (months)"],
        &text_rows,
    ));

    if let Some(dir) = &args.out {
        write_file(dir, "schedule.csv", &csv)?;
        write_file(dir, "schedule.txt", &text)?;
    }
    Ok(match args.format {
        Format::Text => text,
        Format::Csv => csv,
    })
}
