use nalgebra::DVector;

use crate::constraint::BoxConstraint;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Piecewise-constant control: one value per grid node `t_0..=t_N`, held
/// on `[t_n, t_{n+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPath {
    grid: TimeGrid,
    values: Vec<DVector<f64>>,
}

impl ControlPath {
    pub fn new(grid: TimeGrid, values: Vec<DVector<f64>>) -> Result<Self> {
        if values.len() != grid.steps() + 1 {
            return Err(Error::Config(format!("control has {} nodes, grid needs {}", values.len(), grid.steps() + 1)));
        }
        let m = values[0].len();
        if m == 0 || values.iter().any(|v| v.len() != m) {
            return Err(Error::Config("control nodes have inconsistent dimensions".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TimeGrid, value: DVector<f64>) -> Self {
        Self { grid, values: vec![value; grid.steps() + 1] }
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        Self::constant(grid, DVector::zeros(dim))
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> DVector<f64>) -> Self {
        Self { grid, values: grid.nodes().map(f).collect() }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.values
    }

    pub fn node(&self, n: usize) -> &DVector<f64> {
        &self.values[n]
    }

    pub fn is_feasible(&self, constraint: &BoxConstraint) -> bool {
        self.values.iter().all(|v| constraint.contains(v))
    }

    pub fn project(&mut self, constraint: &BoxConstraint) {
        for v in &mut self.values {
            constraint.project_in_place(v);
        }
    }
}
