//! Stochastic optimal control problem description.
//!
//! A problem is a set of coefficient functions for the controlled state
//! equation `dX = b(t, X, u) dt + sigma(t, X, u) dW` together with the
//! running cost `r`, the terminal loss `Phi` and all partial derivatives the
//! adjoint equation and the gradient need. Derivatives are supplied by the
//! user and can be verified against finite differences with
//! [`check_derivatives`].

mod custom;
mod derivatives;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::constraint::BoxConstraint;
use crate::error::{Error, Result};

pub use custom::CustomProblem;
pub use derivatives::{
    check_derivatives, check_derivatives_with, CheckOptions, DerivativeField, DerivativeReport, FieldReport,
};

/// A training datum `gamma`. Benchmarks that bake their targets into the
/// costs use an empty vector.
pub type Datum = DVector<f64>;

/// State, control and noise dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub state: usize,
    pub control: usize,
    pub noise: usize,
}

impl Dims {
    pub fn new(state: usize, control: usize, noise: usize) -> Result<Self> {
        if state == 0 || control == 0 || noise == 0 {
            return Err(Error::Config(format!("dimensions must be positive, got p={state}, m={control}, q={noise}")));
        }
        Ok(Self { state, control, noise })
    }

    pub fn scalar() -> Self {
        Self { state: 1, control: 1, noise: 1 }
    }
}

/// Which adjoint driver the backward pass uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DriverMode {
    /// `f = b_x^T Y + r_x`, terminal `Z_N = 0`.
    Restricted,
    /// Adds `sum_j (sigma_x^j)^T Z^(j)` to the driver; terminal
    /// `Z_N = Phi_xx sigma`.
    General,
}

impl DriverMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DriverMode::Restricted => "restricted",
            DriverMode::General => "general",
        }
    }
}

impl fmt::Display for DriverMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DriverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "restricted" => Ok(DriverMode::Restricted),
            "general" => Ok(DriverMode::General),
            other => Err(Error::Config(format!("unknown driver mode `{other}`"))),
        }
    }
}

/// Coefficient functions of a control problem.
///
/// Shapes: drift and its state gradient live in `R^p` / `R^{p x p}`,
/// the diffusion is `p x q`, and the per-noise-column Jacobians
/// `diffusion_x` / `diffusion_u` return `q` matrices of shape `p x p` and
/// `p x m`. Partial derivatives follow the usual Jacobian layout
/// (`drift_x[(i, k)] = d b_i / d x_k`).
pub trait Coefficients: Send + Sync {
    fn dims(&self) -> Dims;

    fn drift(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    fn diffusion(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;
    fn running_cost(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> f64;
    fn terminal_cost(&self, x: &DVector<f64>, data: &Datum) -> f64;
    fn terminal_grad(&self, x: &DVector<f64>, data: &Datum) -> DVector<f64>;

    /// Only needed for [`DriverMode::General`].
    fn terminal_hessian(&self, _x: &DVector<f64>, _data: &Datum) -> Option<DMatrix<f64>> {
        None
    }

    fn drift_x(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;
    fn drift_u(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;
    fn diffusion_x(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> Vec<DMatrix<f64>>;
    fn diffusion_u(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> Vec<DMatrix<f64>>;
    fn running_cost_x(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    fn running_cost_u(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    fn sample_data(&self, _rng: &mut dyn RngCore) -> Datum {
        DVector::zeros(0)
    }

    fn sample_x0(&self, rng: &mut dyn RngCore) -> DVector<f64>;
}

/// A control problem: coefficients plus the admissible box and the adjoint
/// driver convention. Cheap to clone; coefficients are shared.
#[derive(Clone)]
pub struct ProblemSpec {
    dims: Dims,
    coefficients: Arc<dyn Coefficients>,
    constraint: BoxConstraint,
    driver_mode: DriverMode,
    label: String,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("label", &self.label)
            .field("dims", &self.dims)
            .field("constraint", &self.constraint)
            .field("driver_mode", &self.driver_mode)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// Wraps `coefficients` with an unbounded constraint and the restricted
    /// driver.
    pub fn new<C: Coefficients + 'static>(coefficients: C) -> Self {
        let dims = coefficients.dims();
        Self {
            dims,
            coefficients: Arc::new(coefficients),
            constraint: BoxConstraint::unbounded(dims.control),
            driver_mode: DriverMode::Restricted,
            label: "custom".to_owned(),
        }
    }

    pub fn with_constraint(mut self, constraint: BoxConstraint) -> Result<Self> {
        if constraint.dim() != self.dims.control {
            return Err(Error::Config(format!(
                "constraint has dimension {} but the control has {}",
                constraint.dim(),
                self.dims.control
            )));
        }
        self.constraint = constraint;
        Ok(self)
    }

    pub fn with_driver_mode(mut self, mode: DriverMode) -> Self {
        self.driver_mode = mode;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn coefficients(&self) -> &dyn Coefficients {
        self.coefficients.as_ref()
    }

    pub fn constraint(&self) -> &BoxConstraint {
        &self.constraint
    }

    pub fn driver_mode(&self) -> DriverMode {
        self.driver_mode
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Evaluates every coefficient once at `(t, x, u)` and checks the output
    /// shapes against [`Dims`].
    pub fn validate_shapes(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>, data: &Datum) -> Result<()> {
        let Dims { state: p, control: m, noise: q } = self.dims;
        let c = self.coefficients();
        if x.len() != p || u.len() != m {
            return Err(Error::Config(format!(
                "evaluation point has |x|={} |u|={}, expected {p} and {m}",
                x.len(),
                u.len()
            )));
        }
        let mut bad = Vec::new();
        let mut expect = |name: &str, got: (usize, usize), want: (usize, usize)| {
            if got != want {
                bad.push(format!("{name}: got {got:?}, expected {want:?}"));
            }
        };
        expect("drift", c.drift(t, x, u).shape(), (p, 1));
        expect("diffusion", c.diffusion(t, x, u).shape(), (p, q));
        expect("terminal_grad", c.terminal_grad(x, data).shape(), (p, 1));
        expect("drift_x", c.drift_x(t, x, u).shape(), (p, p));
        expect("drift_u", c.drift_u(t, x, u).shape(), (p, m));
        expect("running_cost_x", c.running_cost_x(t, x, u).shape(), (p, 1));
        expect("running_cost_u", c.running_cost_u(t, x, u).shape(), (m, 1));
        let sx = c.diffusion_x(t, x, u);
        expect("diffusion_x count", (sx.len(), 1), (q, 1));
        for s in &sx {
            expect("diffusion_x", s.shape(), (p, p));
        }
        let su = c.diffusion_u(t, x, u);
        expect("diffusion_u count", (su.len(), 1), (q, 1));
        for s in &su {
            expect("diffusion_u", s.shape(), (p, m));
        }
        if let Some(hess) = c.terminal_hessian(x, data) {
            expect("terminal_hessian", hess.shape(), (p, p));
        } else if self.driver_mode == DriverMode::General {
            bad.push("terminal_hessian is required in general driver mode".to_owned());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}
