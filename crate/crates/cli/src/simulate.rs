use std::fmt::Write as _;

use gsd_core::sim::{aggregate, simulate, McEstimate, OperatingCharacteristics, OutcomeRow, SimConfig};

use crate::config::{load_table, ConfigDocument};
use crate::{csv_string, text_table, write_file, CliError, Format, SimulateArgs};

pub fn sim_config(doc: &ConfigDocument, args: &SimulateArgs) -> Result<SimConfig, CliError> {
    let table = match &args.table {
        Some(path) => load_table(path)?,
        None => doc.boundary_table()?,
    };
    let spec = doc.design_spec();
    let hr_true = args.hr_true.unwrap_or(spec.hr_alternative);
    let mut config = SimConfig::new(spec, table, doc.model()?, hr_true, args.trials, args.seed)
        .honor_futility(args.honor_futility);
    config.event_perturbation = args.perturbation;
    config.ssd_lag_days = doc.reporting.ssd_lag_weeks * 7;
    if let Some(d) = doc.reporting.first_patient_in_date {
        config.first_patient_in = d;
    }
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(config)
}

fn est(e: McEstimate) -> [String; 2] {
    [e.mean.to_string(), e.se.to_string()]
}

pub fn oc_csv(oc: &OperatingCharacteristics) -> Result<String, CliError> {
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut push = |metric: String, e: McEstimate| {
        let [m, s] = est(e);
        rows.push(vec![metric, m, s]);
    };
    push("rejection".into(), oc.rejection);
    push("futility_stop".into(), oc.futility_stop);
    push("expected_events".into(), oc.expected_events);
    push("expected_duration_months".into(), oc.expected_duration_months);
    for l in &oc.looks {
        push(format!("{}:conducted", l.label), l.conducted);
        push(format!("{}:efficacy_stop", l.label), l.efficacy_stop);
        push(format!("{}:futility_stop", l.label), l.futility_stop);
        push(format!("{}:futility_recommended", l.label), l.futility_recommended);
        push(format!("{}:mean_ccod_month", l.label), l.mean_ccod_month);
        push(format!("{}:mean_events", l.label), l.mean_events);
    }
    csv_string(&["metric", "estimate", "mc_se"], &rows)
}

pub fn oc_text(config: &SimConfig, oc: &OperatingCharacteristics) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Operating characteristics at HR {}: {} trials, seed {}, futility {}{}",
        oc.hr_true,
        oc.n_trials,
        config.seed,
        if oc.honor_futility { "honoured" } else { "ignored" },
        config
            .event_perturbation
            .map(|f| format!(", event counts within ±{f}"))
            .unwrap_or_default()
    );
    let line = |name: &str, e: McEstimate| format!("{name:<28}{:.5}  (MC SE {:.5})\n", e.mean, e.se);
    out.push_str(&line("Rejection probability", oc.rejection));
    out.push_str(&line("Futility stop probability", oc.futility_stop));
    out.push_str(&line("Expected events", oc.expected_events));
    out.push_str(&line("Expected duration (months)", oc.expected_duration_months));
    out.push('\n');
    let rows: Vec<Vec<String>> = oc
        .looks
        .iter()
        .map(|l| {
            vec![
                l.label.clone(),
                format!("{:.4}", l.conducted.mean),
                format!("{:.4}", l.efficacy_stop.mean),
                format!("{:.4}", l.futility_stop.mean),
                format!("{:.4}", l.futility_recommended.mean),
                format!("{:.2}", l.mean_ccod_month.mean),
                format!("{:.1}", l.mean_events.mean),
            ]
        })
        .collect();
    out.push_str(&text_table(
        &["Analysis", "Conducted", "Efficacy stop", "Futility stop", "Futility met", "Mean month", "Mean events"],
        &rows,
    ));
    out
}

pub fn run(args: &SimulateArgs) -> Result<String, CliError> {
    let doc = ConfigDocument::load(&args.config)?;
    let config = sim_config(&doc, args)?;
    let outcomes = simulate(&config)?;
    let oc = aggregate(&config, &outcomes);
    let csv = oc_csv(&oc)?;
    let text = oc_text(&config, &oc);
    if let Some(dir) = &args.out {
        write_file(dir, "oc.csv", &csv)?;
        write_file(dir, "oc.txt", &text)?;
        let json = serde_json::to_string_pretty(&oc).map_err(|e| CliError::Io(e.to_string()))?;
        write_file(dir, "oc.json", &(json + "\n"))?;
        let mut w = csv::Writer::from_writer(Vec::new());
        for o in &outcomes {
            w.serialize(OutcomeRow::from(o)).map_err(|e| CliError::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        write_file(dir, "outcomes.csv", &String::from_utf8_lossy(&bytes))?;
    }
    Ok(match args.format {
        Format::Text => text,
        Format::Csv => csv,
    })
}
