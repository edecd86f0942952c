//! Benchmark control problems with closed-form optimal controls, the RMSE
//! metric and the convergence-study driver.

mod example1;
mod example2;
mod study;
mod toy;

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::control::ControlPath;
use crate::error::Result;
use crate::grid::TimeGrid;
use crate::problem::ProblemSpec;

pub use example1::{example1_problem, Example1};
pub use example2::{example2_problem, Example2};
pub use study::{
    convergence_study, fit_rows, iterations_for, ConvergenceReport, StudyConfig, StudyRow, DESK_STEPS, PAPER_STEPS,
};
pub use toy::{linear_test_problem, quadratic_sanity_problem};

type TimeFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// A control problem together with its exact optimal control.
#[derive(Clone)]
pub struct Benchmark {
    label: String,
    problem: ProblemSpec,
    horizon: f64,
    exact_control: TimeFn,
    exact_target: TimeFn,
}

impl fmt::Debug for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Benchmark")
            .field("label", &self.label)
            .field("horizon", &self.horizon)
            .field("problem", &self.problem)
            .finish_non_exhaustive()
    }
}

impl Benchmark {
    pub fn new(
        label: impl Into<String>,
        problem: ProblemSpec,
        horizon: f64,
        exact_control: impl Fn(f64) -> DVector<f64> + Send + Sync + 'static,
        exact_target: impl Fn(f64) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            problem,
            horizon,
            exact_control: Arc::new(exact_control),
            exact_target: Arc::new(exact_target),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn exact_control(&self, t: f64) -> DVector<f64> {
        (self.exact_control)(t)
    }

    /// The tracking target `X*_t` baked into the running cost.
    pub fn exact_target(&self, t: f64) -> DVector<f64> {
        (self.exact_target)(t)
    }

    pub fn grid(&self, steps: usize) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, steps)
    }

    pub fn exact_path(&self, grid: &TimeGrid) -> ControlPath {
        ControlPath::from_fn(*grid, |t| self.exact_control(t))
    }

    pub fn with_problem(mut self, problem: ProblemSpec) -> Self {
        self.problem = problem;
        self
    }
}

/// Node-wise, component-wise root mean square error
/// `sqrt( sum_n |u_n - u*(t_n)|^2 / ((N + 1) m) )`.
pub fn rmse(u: &ControlPath, exact: impl Fn(f64) -> DVector<f64>, grid: &TimeGrid) -> f64 {
    let m = u.dim() as f64;
    let total: f64 = grid.nodes().zip(u.values()).map(|(t, un)| (un - exact(t)).norm_squared()).sum();
    (total / (u.len() as f64 * m)).sqrt()
}
