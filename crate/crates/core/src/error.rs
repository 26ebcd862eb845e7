use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid trial model: {0}")]
    InvalidModel(String),

    #[error("no sign change on bracket [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    NoSignChange {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("unreachable target: {target} events exceeds the asymptotic expectation {asymptote:.1}")]
    UnreachableTarget { target: u32, asymptote: f64 },

    /// A monitoring request that would break the sequential testing contract.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unknown analysis label `{0}`")]
    UnknownLabel(String),

    #[error("course is still open; designations are only final once the hypothesis is settled")]
    IncompleteCourse,

    #[error("numerical failure: {0}")]
    Numerical(String),
}
