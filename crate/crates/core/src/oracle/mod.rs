//! Brute-force verifiers, independent of the sample-wise solver path:
//! nested Monte Carlo for the conditional-expectation adjoint schemes,
//! common-random-number finite differences of the cost, and moment checks
//! for the increment sampler.

mod fd;
mod increments;
mod nested;

pub use fd::{finite_difference_gradient, FdOutcome};
pub use increments::{
    increment_law_check, increment_law_check_with, Deviation, IncrementLawOptions, IncrementLawReport, MomentCheck,
    SUB_GRID_POINTS,
};
pub use nested::{nested_mc_bsde, NestedConfig, NestedEstimate};

/// A Monte Carlo value with its standard error. Vector and matrix
/// quantities are flattened column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleEstimate {
    pub value: Vec<f64>,
    pub standard_error: Vec<f64>,
    pub samples_used: usize,
}

impl OracleEstimate {
    pub fn scalar(value: f64, standard_error: f64, samples_used: usize) -> Self {
        Self { value: vec![value], standard_error: vec![standard_error], samples_used }
    }
}
