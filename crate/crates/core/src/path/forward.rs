use nalgebra::DVector;

use super::NoisePath;
use crate::control::ControlPath;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::problem::ProblemSpec;

/// Sample-wise state trajectory `X_0..=X_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPath {
    grid: TimeGrid,
    states: Vec<DVector<f64>>,
}

impl ForwardPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn state(&self, n: usize) -> &DVector<f64> {
        &self.states[n]
    }

    pub fn terminal(&self) -> &DVector<f64> {
        self.states.last().expect("path has at least two nodes")
    }
}

/// Euler-Maruyama pass
/// `X_{n+1} = X_n + h b(t_n, X_n, u_n) + sigma(t_n, X_n, u_n) omega_{n+1}`.
pub fn simulate_forward(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    u: &ControlPath,
    noise: &NoisePath,
    x0: &DVector<f64>,
) -> Result<ForwardPath> {
    let dims = problem.dims();
    if u.grid() != grid || noise.grid() != grid {
        return Err(Error::Config("control, noise and grid disagree".into()));
    }
    if x0.len() != dims.state || u.dim() != dims.control || noise.dim() != dims.noise {
        return Err(Error::Config(format!(
            "shape mismatch: |x0|={} |u|={} |noise|={} for dims {:?}",
            x0.len(),
            u.dim(),
            noise.dim(),
            dims
        )));
    }
    let c = problem.coefficients();
    let h = grid.step_size();
    let mut states = Vec::with_capacity(grid.steps() + 1);
    states.push(x0.clone());
    for n in 0..grid.steps() {
        let t = grid.node(n);
        let x = &states[n];
        let un = u.node(n);
        let mut next = c.diffusion(t, x, un) * noise.omega(n);
        next.axpy(h, &c.drift(t, x, un), 1.0);
        next += x;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergedPath { step: n + 1 });
        }
        states.push(next);
    }
    Ok(ForwardPath { grid: *grid, states })
}
