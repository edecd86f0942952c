use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::OracleEstimate;
use crate::control::ControlPath;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::path::{simulate_forward, NoisePath};
use crate::problem::ProblemSpec;
use crate::stats::Welford;
use crate::trainer::path_cost;

/// Result of a finite-difference probe.
#[derive(Debug, Clone, PartialEq)]
pub enum FdOutcome {
    Estimate(OracleEstimate),
    /// The paired difference did not clear ten standard errors; `eps` is
    /// too small (or the true partial is zero) to say anything.
    Inconclusive {
        difference: f64,
        std_error: f64,
        samples: usize,
    },
}

impl FdOutcome {
    pub fn estimate(&self) -> Option<&OracleEstimate> {
        match self {
            FdOutcome::Estimate(e) => Some(e),
            FdOutcome::Inconclusive { .. } => None,
        }
    }

    /// Mean and standard error whether or not the probe was conclusive.
    pub fn mean_and_se(&self) -> (f64, f64) {
        match self {
            FdOutcome::Estimate(e) => (e.value[0], e.standard_error[0]),
            FdOutcome::Inconclusive { difference, std_error, .. } => (*difference, *std_error),
        }
    }
}

/// Central difference `(J(u + eps e) - J(u - eps e)) / (2 eps h)` of the
/// Monte Carlo cost with respect to component `comp` of the control at
/// `node`. Both costs share every random draw, and the division by `h`
/// puts the result on the same scale as the sample-wise gradient.
#[allow(clippy::too_many_arguments)]
pub fn finite_difference_gradient(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    u: &ControlPath,
    node: usize,
    comp: usize,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<FdOutcome> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {eps}")));
    }
    if samples < 2 {
        return Err(Error::Config("finite differences need at least two samples".into()));
    }
    if node > grid.steps() || comp >= u.dim() || u.grid() != grid {
        return Err(Error::Config(format!("no control entry ({node}, {comp}) on this grid")));
    }
    let mut plus = u.clone();
    plus.values_mut()[node][comp] += eps;
    let mut minus = u.clone();
    minus.values_mut()[node][comp] -= eps;

    let c = problem.coefficients();
    let scale = 1.0 / (2.0 * eps * grid.step_size());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Welford::default();
    for _ in 0..samples {
        let data = c.sample_data(&mut rng);
        let x0 = c.sample_x0(&mut rng);
        let noise = NoisePath::sample(grid, problem.dims().noise, &mut rng);
        let up = simulate_forward(problem, grid, &plus, &noise, &x0)?;
        let down = simulate_forward(problem, grid, &minus, &noise, &x0)?;
        acc.push(
            scale * (path_cost(problem, grid, &plus, &up, &data) - path_cost(problem, grid, &minus, &down, &data)),
        );
    }
    let (mean, se) = (acc.mean(), acc.std_error());
    if mean.abs() < 10.0 * se {
        return Ok(FdOutcome::Inconclusive { difference: mean, std_error: se, samples });
    }
    Ok(FdOutcome::Estimate(OracleEstimate::scalar(mean, se, samples)))
}
