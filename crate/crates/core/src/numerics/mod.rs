//! Numerical substrate shared by every engine.

mod normal;
pub(crate) mod recursion;
mod root;

pub use normal::{norm_cdf, norm_pdf, norm_quantile, norm_sf};
pub use recursion::{
    crossing_probabilities, exit_probability, ContinuationRegion, Crossings, DriftParameter,
    Quadrature, SubDensity,
};
pub use root::{expand_bracket, find_root};
