//! Finite-difference verification of user-supplied derivatives.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Coefficients, DriverMode, ProblemSpec};

/// Denominator floor for the relative error, so identically zero fields
/// compare in absolute terms.
const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeField {
    DriftX,
    DriftU,
    DiffusionX,
    DiffusionU,
    RunningCostX,
    RunningCostU,
    TerminalGrad,
    TerminalHessian,
}

impl fmt::Display for DerivativeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            DerivativeField::DriftX => "b_x",
            DerivativeField::DriftU => "b_u",
            DerivativeField::DiffusionX => "sigma_x",
            DerivativeField::DiffusionU => "sigma_u",
            DerivativeField::RunningCostX => "r_x",
            DerivativeField::RunningCostU => "r_u",
            DerivativeField::TerminalGrad => "phi_x",
            DerivativeField::TerminalHessian => "phi_xx",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone)]
pub struct FieldReport {
    pub field: DerivativeField,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct DerivativeReport {
    pub tolerance: f64,
    pub fields: Vec<FieldReport>,
    /// Fields whose base function or supplied derivative produced a
    /// non-finite value, with the sampled time.
    pub non_finite: Vec<(DerivativeField, f64)>,
}

impl DerivativeReport {
    pub fn passed(&self) -> bool {
        self.non_finite.is_empty() && self.fields.iter().all(|f| f.passed)
    }

    pub fn field(&self, field: DerivativeField) -> Option<&FieldReport> {
        self.fields.iter().find(|f| f.field == field)
    }

    pub fn failures(&self) -> Vec<DerivativeField> {
        self.fields.iter().filter(|f| !f.passed).map(|f| f.field).collect()
    }
}

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub trials: usize,
    pub tolerance: f64,
    /// Sample times are drawn uniformly from `[0, horizon]`.
    pub horizon: f64,
    /// Standard deviation of the sampled states and controls.
    pub scale: f64,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { trials: 100, tolerance: 1e-5, horizon: 1.0, scale: 1.0, seed: 0xde_121a }
    }
}

pub fn check_derivatives(problem: &ProblemSpec, trials: usize, tol: f64) -> DerivativeReport {
    check_derivatives_with(problem, &CheckOptions { trials, tolerance: tol, ..CheckOptions::default() })
}

pub fn check_derivatives_with(problem: &ProblemSpec, opts: &CheckOptions) -> DerivativeReport {
    let c = problem.coefficients();
    let dims = problem.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let check_hessian = problem.driver_mode() == DriverMode::General
        || c.terminal_hessian(&DVector::zeros(dims.state), &c.sample_data(&mut rng)).is_some();

    let mut fields = vec![
        DerivativeField::DriftX,
        DerivativeField::DriftU,
        DerivativeField::DiffusionX,
        DerivativeField::DiffusionU,
        DerivativeField::RunningCostX,
        DerivativeField::RunningCostU,
        DerivativeField::TerminalGrad,
    ];
    if check_hessian {
        fields.push(DerivativeField::TerminalHessian);
    }
    let mut worst = vec![0.0_f64; fields.len()];
    let mut non_finite = Vec::new();

    for _ in 0..opts.trials.max(1) {
        let t = rng.random::<f64>() * opts.horizon;
        let x = gaussian(&mut rng, dims.state, opts.scale);
        let u = gaussian(&mut rng, dims.control, opts.scale);
        let data = c.sample_data(&mut rng);
        for (slot, &field) in fields.iter().enumerate() {
            match field_error(c, field, t, &x, &u, &data) {
                Some(err) if err.is_finite() => worst[slot] = worst[slot].max(err),
                _ => {
                    if !non_finite.iter().any(|(f, _)| *f == field) {
                        non_finite.push((field, t));
                    }
                }
            }
        }
    }

    let fields = fields
        .into_iter()
        .zip(worst)
        .map(|(field, max_rel_error)| FieldReport { field, max_rel_error, passed: max_rel_error <= opts.tolerance })
        .collect();
    DerivativeReport { tolerance: opts.tolerance, fields, non_finite }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Relative deviation of one supplied derivative at one point, or `None`
/// when something non-finite shows up.
fn field_error(
    c: &dyn Coefficients,
    field: DerivativeField,
    t: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    data: &DVector<f64>,
) -> Option<f64> {
    let (supplied, numeric) = match field {
        DerivativeField::DriftX => (c.drift_x(t, x, u), jacobian(|y| c.drift(t, y, u), x)),
        DerivativeField::DriftU => (c.drift_u(t, x, u), jacobian(|v| c.drift(t, x, v), u)),
        DerivativeField::DiffusionX | DerivativeField::DiffusionU => {
            let wrt_x = field == DerivativeField::DiffusionX;
            let supplied = if wrt_x { c.diffusion_x(t, x, u) } else { c.diffusion_u(t, x, u) };
            let q = c.dims().noise;
            if supplied.len() != q {
                return None;
            }
            let mut worst = 0.0_f64;
            for (j, s) in supplied.iter().enumerate() {
                let numeric = if wrt_x {
                    jacobian(|y| c.diffusion(t, y, u).column(j).into_owned(), x)
                } else {
                    jacobian(|v| c.diffusion(t, x, v).column(j).into_owned(), u)
                };
                worst = worst.max(relative(s, &numeric)?);
            }
            return Some(worst);
        }
        DerivativeField::RunningCostX => {
            (as_column(c.running_cost_x(t, x, u)), gradient(|y| c.running_cost(t, y, u), x))
        }
        DerivativeField::RunningCostU => {
            (as_column(c.running_cost_u(t, x, u)), gradient(|v| c.running_cost(t, x, v), u))
        }
        DerivativeField::TerminalGrad => {
            (as_column(c.terminal_grad(x, data)), gradient(|y| c.terminal_cost(y, data), x))
        }
        DerivativeField::TerminalHessian => (c.terminal_hessian(x, data)?, jacobian(|y| c.terminal_grad(y, data), x)),
    };
    relative(&supplied, &numeric)
}

fn as_column(v: DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    DMatrix::from_column_slice(n, 1, v.as_slice())
}

fn relative(supplied: &DMatrix<f64>, numeric: &DMatrix<f64>) -> Option<f64> {
    if supplied.shape() != numeric.shape() {
        return Some(f64::INFINITY);
    }
    if supplied.iter().chain(numeric.iter()).any(|v| !v.is_finite()) {
        return None;
    }
    Some((supplied - numeric).norm() / numeric.norm().max(REL_FLOOR))
}

fn fd_step(v: f64) -> f64 {
    1e-6 * (1.0 + v.abs())
}

/// Central-difference Jacobian, `rows = |f|`, `cols = |at|`.
fn jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, at: &DVector<f64>) -> DMatrix<f64> {
    let rows = f(at).len();
    let mut jac = DMatrix::zeros(rows, at.len());
    let mut probe = at.clone();
    for k in 0..at.len() {
        let step = fd_step(at[k]);
        probe[k] = at[k] + step;
        let plus = f(&probe);
        probe[k] = at[k] - step;
        let minus = f(&probe);
        probe[k] = at[k];
        jac.set_column(k, &((plus - minus) / (2.0 * step)));
    }
    jac
}

/// Central-difference gradient of a scalar function as a column.
fn gradient(f: impl Fn(&DVector<f64>) -> f64, at: &DVector<f64>) -> DMatrix<f64> {
    let wrapped = |y: &DVector<f64>| DVector::from_element(1, f(y));
    jacobian(wrapped, at).transpose()
}
