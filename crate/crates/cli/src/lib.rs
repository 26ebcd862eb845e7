//! `gsd` command-line front end: design tables, predicted timing, live
//! monitoring, simulation and trial reports.

pub mod config;
mod design;
mod monitor;
pub mod report;
mod simulate;
mod timing;

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

pub use config::ConfigDocument;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Core(#[from] gsd_core::Error),
    #[error("{0}")]
    Io(String),
    #[error("terminology lint: {0}")]
    Lint(String),
}

impl CliError {
    /// 2 for configuration problems, 3 for monitoring contract violations.
    pub fn exit_code(&self) -> i32 {
        use gsd_core::Error as E;
        match self {
            Self::Config(_) => 2,
            Self::Contract(_) => 3,
            Self::Core(E::InvalidDesign(_) | E::InvalidModel(_)) => 2,
            Self::Core(E::Contract(_) | E::IncompleteCourse | E::UnknownLabel(_)) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "gsd", version, about = "Group-sequential trial design, monitoring and reporting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the boundary table.
    Design(DesignArgs),
    /// Predict analysis timing.
    Timing(TimingArgs),
    /// Keep the log of a running trial.
    #[command(subcommand)]
    Monitor(MonitorCommand),
    /// Monte Carlo operating characteristics.
    Simulate(SimulateArgs),
    /// Render a trial report from a course file.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Write design.csv, design.txt and boundary_table.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct TimingArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Boundary table written by `design`, used instead of re-deriving it.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum MonitorCommand {
    /// Start a course file from a configuration.
    Init {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        course: PathBuf,
        /// Boundary table written by `design`.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Replace an existing course file.
        #[arg(long)]
        force: bool,
    },
    /// Record a conducted analysis.
    Record(RecordArgs),
    /// Mark the decisive analysis.
    Decisive {
        #[arg(long)]
        course: PathBuf,
        #[arg(long)]
        label: String,
    },
    /// Print the current state of a course.
    Status {
        #[arg(long)]
        course: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    #[arg(long)]
    pub course: PathBuf,
    #[arg(long)]
    pub label: String,
    /// Clinical cutoff date (YYYY-MM-DD).
    #[arg(long)]
    pub ccod: NaiveDate,
    /// Snapshot date (YYYY-MM-DD).
    #[arg(long)]
    pub ssd: NaiveDate,
    #[arg(long)]
    pub events: u32,
    /// Observed hazard ratio.
    #[arg(long, conflicts_with = "z", required_unless_present = "z")]
    pub hr: Option<f64>,
    /// Observed z statistic, positive favouring the experimental arm.
    #[arg(long)]
    pub z: Option<f64>,
    /// Estimation only; the hypothesis is already settled.
    #[arg(long)]
    pub update: bool,
    /// Continue although the futility criterion is met.
    #[arg(long)]
    pub overrule_futility: bool,
    /// The analysis was postponed on purpose after a failed interim.
    #[arg(long)]
    pub delayed: bool,
    /// Events between the cutoff and the snapshot.
    #[arg(long)]
    pub pipeline_events: Option<u32>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// True hazard ratio; defaults to the design alternative.
    #[arg(long)]
    pub hr_true: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, action = ArgAction::Set, default_value_t = true)]
    pub honor_futility: bool,
    /// Draw observed event counts within ± this fraction of each target.
    #[arg(long)]
    pub perturbation: Option<f64>,
    /// Write oc.json, oc.csv and outcomes.csv here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub course: PathBuf,
    /// Two-sided level of the confidence intervals.
    #[arg(long, default_value_t = 0.05)]
    pub level: f64,
    /// Present nominal levels one-sided.
    #[arg(long)]
    pub one_sided: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Run a parsed command and return what it prints.
pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Design(args) => design::run(&args),
        Command::Timing(args) => timing::run(&args),
        Command::Monitor(cmd) => monitor::run(cmd),
        Command::Simulate(args) => simulate::run(&args),
        Command::Report(args) => report::run(&args),
    }
}

pub(crate) fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Full-precision CSV cell; empty when absent.
pub(crate) fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub(crate) fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

/// Left-aligned first column, right-aligned others.
pub(crate) fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<String>| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = vec![line(header.iter().map(|h| h.to_string()).collect())];
    out.push(widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  "));
    out.extend(rows.iter().map(|r| line(r.clone())));
    out.join("\n") + "\n"
}
