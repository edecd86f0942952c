use nalgebra::DVector;

use crate::error::{Error, Result};

/// Per-component box `[lo_i, hi_i]`; infinite bounds are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxConstraint {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxConstraint {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Config(format!("box bounds have lengths {} and {}", lo.len(), hi.len())));
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if l.is_nan() || h.is_nan() || l > h {
                return Err(Error::Config(format!("empty box in component {i}: [{l}, {h}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn unbounded(dim: usize) -> Self {
        Self { lo: vec![f64::NEG_INFINITY; dim], hi: vec![f64::INFINITY; dim] }
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lo
    }

    pub fn upper(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, v: &DVector<f64>) -> bool {
        v.len() == self.dim() && v.iter().enumerate().all(|(i, &x)| self.lo[i] <= x && x <= self.hi[i])
    }

    /// Euclidean projection onto the box: componentwise clamping.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        self.project_in_place(&mut out);
        out
    }

    pub fn project_in_place(&self, v: &mut DVector<f64>) {
        debug_assert_eq!(v.len(), self.dim());
        for (i, x) in v.iter_mut().enumerate() {
            *x = x.clamp(self.lo[i], self.hi[i]);
        }
    }
}

pub fn project_box(constraint: &BoxConstraint, v: &DVector<f64>) -> DVector<f64> {
    constraint.project(v)
}
