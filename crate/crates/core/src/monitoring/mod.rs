//! Live-trial bookkeeping: recalculated bounds, decisions and reporting-stage
//! designations.

mod course;
mod designation;
mod recalc;

pub use course::{
    evaluate_decision, AnalysisRecord, Decision, Evaluation, FutilityAction, HypothesisState,
    ObservedAnalysis, ObservedEffect, Purpose, TrialCourse,
};
pub use designation::{
    designate, designate_partial, Designation, DesignationEntry, ReportingLabel,
};
pub use recalc::{
    recalc_interim_level, recalc_primary_level, total_null_rejection, ConductedLook,
    RecalculatedBound,
};
