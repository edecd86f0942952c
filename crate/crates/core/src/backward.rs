//! Sample-wise adjoint pass.
//!
//! The adjoint pair solves `-dY = f dt - Z dW`, `Y_T = Phi_x(X_T)`, with
//! `f = b_x^T Y + r_x` (plus `sum_j (sigma_x^j)^T Z^(j)` in general driver
//! mode). Two discretizations are provided: the second-order
//! trapezoidal/`dW~` scheme and a first-order explicit Euler baseline.
//! Both replace conditional expectations by the single realized path.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::control::ControlPath;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::path::{ForwardPath, NoisePath};
use crate::problem::{Coefficients, Datum, DriverMode, ProblemSpec};

/// Largest accepted condition estimate of `I - (h/2) b_x^T`.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    HighOrder,
    Euler,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::HighOrder => "high-order",
            Scheme::Euler => "euler",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "high-order" | "high_order" => Ok(Scheme::HighOrder),
            "euler" => Ok(Scheme::Euler),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Adjoint trajectory: `Y_n` in `R^p` and `Z_n` in `R^{p x q}` for
/// `n = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardPath {
    grid: TimeGrid,
    y: Vec<DVector<f64>>,
    z: Vec<DMatrix<f64>>,
}

impl BackwardPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn y(&self, n: usize) -> &DVector<f64> {
        &self.y[n]
    }

    pub fn z(&self, n: usize) -> &DMatrix<f64> {
        &self.z[n]
    }

    pub fn ys(&self) -> &[DVector<f64>] {
        &self.y
    }

    pub fn zs(&self) -> &[DMatrix<f64>] {
        &self.z
    }
}

pub fn solve_backward(
    scheme: Scheme,
    problem: &ProblemSpec,
    grid: &TimeGrid,
    u: &ControlPath,
    fwd: &ForwardPath,
    noise: &NoisePath,
    data: &Datum,
) -> Result<BackwardPath> {
    match scheme {
        Scheme::HighOrder => solve_backward_highorder(problem, grid, u, fwd, noise, data),
        Scheme::Euler => solve_backward_euler(problem, grid, u, fwd, noise, data),
    }
}

/// Second-order sample-wise scheme. For `n = N-1, ..., 0`:
///
/// ```text
/// f_{n+1} = f(t_{n+1}, X_{n+1}, Y_{n+1}, Z_{n+1})
/// Z_n     = (2/h) (Y_{n+1} + h f_{n+1}) omega~_{n+1}^T
/// (I - h/2 b_x^T(t_n)) Y_n = Y_{n+1} + h/2 f_{n+1} + h/2 r_x(t_n) [+ h/2 sigma_x^T Z_n]
/// ```
pub fn solve_backward_highorder(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    u: &ControlPath,
    fwd: &ForwardPath,
    noise: &NoisePath,
    data: &Datum,
) -> Result<BackwardPath> {
    check_inputs(problem, grid, u, fwd, noise)?;
    let c = problem.coefficients();
    let mode = problem.driver_mode();
    let steps = grid.steps();
    let h = grid.step_size();

    let (mut y, mut z) = terminal_pair(problem, grid, u, fwd, data)?;
    for n in (0..steps).rev() {
        let (t_next, x_next, u_next) = (grid.node(n + 1), fwd.state(n + 1), u.node(n + 1));
        let f_next = driver(c, mode, t_next, x_next, u_next, &y[n + 1], &z[n + 1]);

        let mut carried = f_next.clone();
        carried.axpy(1.0, &y[n + 1], h);
        let zn = (2.0 / h) * carried * noise.omega_tilde(n).transpose();

        let (t, x, un) = (grid.node(n), fwd.state(n), u.node(n));
        let mut rhs = c.running_cost_x(t, x, un);
        rhs += &f_next;
        if mode == DriverMode::General {
            rhs += diffusion_term(c, t, x, un, &zn);
        }
        rhs *= 0.5 * h;
        rhs += &y[n + 1];
        let yn = implicit_solve(&c.drift_x(t, x, un), h, rhs, n)?;

        if !all_finite(&yn) || zn.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergedAdjoint { step: n });
        }
        y[n] = yn;
        z[n] = zn;
    }
    Ok(BackwardPath { grid: *grid, y, z })
}

/// Explicit Euler baseline: `Z_n = (1/h) Y_{n+1} omega_{n+1}^T`,
/// `Y_n = Y_{n+1} + h f_{n+1}`.
pub fn solve_backward_euler(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    u: &ControlPath,
    fwd: &ForwardPath,
    noise: &NoisePath,
    data: &Datum,
) -> Result<BackwardPath> {
    check_inputs(problem, grid, u, fwd, noise)?;
    let c = problem.coefficients();
    let mode = problem.driver_mode();
    let h = grid.step_size();

    let (mut y, mut z) = terminal_pair(problem, grid, u, fwd, data)?;
    for n in (0..grid.steps()).rev() {
        let (t_next, x_next, u_next) = (grid.node(n + 1), fwd.state(n + 1), u.node(n + 1));
        let f_next = driver(c, mode, t_next, x_next, u_next, &y[n + 1], &z[n + 1]);
        let zn = (1.0 / h) * &y[n + 1] * noise.omega(n).transpose();
        let mut yn = f_next;
        yn.axpy(1.0, &y[n + 1], h);
        if !all_finite(&yn) || zn.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergedAdjoint { step: n });
        }
        y[n] = yn;
        z[n] = zn;
    }
    Ok(BackwardPath { grid: *grid, y, z })
}

/// Adjoint driver `b_x^T Y + r_x`, plus `sum_j (sigma_x^j)^T Z^(j)` in
/// general mode.
pub fn driver(
    c: &dyn Coefficients,
    mode: DriverMode,
    t: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    y: &DVector<f64>,
    z: &DMatrix<f64>,
) -> DVector<f64> {
    let mut f = c.running_cost_x(t, x, u);
    f.gemv_tr(1.0, &c.drift_x(t, x, u), y, 1.0);
    if mode == DriverMode::General {
        f += diffusion_term(c, t, x, u, z);
    }
    f
}

/// `sum_j (sigma_x^j)^T Z^(j)`.
pub(crate) fn diffusion_term(
    c: &dyn Coefficients,
    t: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    z: &DMatrix<f64>,
) -> DVector<f64> {
    let mut acc = DVector::zeros(x.len());
    for (j, sx) in c.diffusion_x(t, x, u).iter().enumerate() {
        acc.gemv_tr(1.0, sx, &z.column(j), 1.0);
    }
    acc
}

/// Solves `(I - (h/2) b_x^T) y = rhs`. Scalar problems divide directly;
/// larger ones use LU with partial pivoting.
pub(crate) fn implicit_solve(drift_x: &DMatrix<f64>, h: f64, rhs: DVector<f64>, step: usize) -> Result<DVector<f64>> {
    let p = rhs.len();
    if p == 1 {
        let a = 1.0 - 0.5 * h * drift_x[(0, 0)];
        let condition = a.abs().max(1.0) / a.abs();
        if condition.is_nan() || condition > MAX_CONDITION {
            return Err(Error::StepTooLarge { step, condition });
        }
        return Ok(rhs / a);
    }
    let a = DMatrix::identity(p, p) - (0.5 * h) * drift_x.transpose();
    let lu = a.clone().lu();
    let inverse = lu.try_inverse().ok_or(Error::StepTooLarge { step, condition: f64::INFINITY })?;
    let condition = one_norm(&a).max(1.0) * one_norm(&inverse);
    if condition.is_nan() || condition > MAX_CONDITION {
        return Err(Error::StepTooLarge { step, condition });
    }
    lu.solve(&rhs).ok_or(Error::StepTooLarge { step, condition })
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `Y_N = Phi_x(X_N)`; `Z_N = 0` in restricted mode and
/// `Phi_xx(X_N) sigma(t_N, X_N, u_N)` in general mode.
pub(crate) fn terminal_values(
    problem: &ProblemSpec,
    t: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    data: &Datum,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let c = problem.coefficients();
    let dims = problem.dims();
    let y = c.terminal_grad(x, data);
    let z = match problem.driver_mode() {
        DriverMode::Restricted => DMatrix::zeros(dims.state, dims.noise),
        DriverMode::General => {
            let hess = c
                .terminal_hessian(x, data)
                .ok_or_else(|| Error::Config("general driver mode needs the terminal Hessian".into()))?;
            hess * c.diffusion(t, x, u)
        }
    };
    Ok((y, z))
}

type Pair = (Vec<DVector<f64>>, Vec<DMatrix<f64>>);

fn terminal_pair(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    u: &ControlPath,
    fwd: &ForwardPath,
    data: &Datum,
) -> Result<Pair> {
    let dims = problem.dims();
    let steps = grid.steps();
    let mut y = vec![DVector::zeros(dims.state); steps + 1];
    let mut z = vec![DMatrix::zeros(dims.state, dims.noise); steps + 1];
    let (yn, zn) = terminal_values(problem, grid.node(steps), fwd.terminal(), u.node(steps), data)?;
    if !all_finite(&yn) || zn.iter().any(|v| !v.is_finite()) {
        return Err(Error::DivergedAdjoint { step: steps });
    }
    y[steps] = yn;
    z[steps] = zn;
    Ok((y, z))
}

fn check_inputs(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    u: &ControlPath,
    fwd: &ForwardPath,
    noise: &NoisePath,
) -> Result<()> {
    if u.grid() != grid || fwd.grid() != grid || noise.grid() != grid {
        return Err(Error::Config("control, paths and grid disagree".into()));
    }
    let dims = problem.dims();
    if u.dim() != dims.control || noise.dim() != dims.noise || fwd.state(0).len() != dims.state {
        return Err(Error::Config(format!("path shapes do not match dims {dims:?}")));
    }
    Ok(())
}

fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::simulate_forward;
    use crate::problem::{CustomProblem, Dims};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    fn setup(spec: &ProblemSpec, steps: usize, seed: u64) -> (TimeGrid, ControlPath, ForwardPath, NoisePath) {
        let grid = TimeGrid::new(1.0, steps).unwrap();
        let u = ControlPath::constant(grid, scalar(0.3));
        let noise = NoisePath::sample(&grid, 1, &mut ChaCha8Rng::seed_from_u64(seed));
        let fwd = simulate_forward(spec, &grid, &u, &noise, &scalar(0.2)).unwrap();
        (grid, u, fwd, noise)
    }

    fn identity_terminal() -> CustomProblem {
        CustomProblem::new(Dims::scalar())
            .diffusion(|_, _, _| DMatrix::from_element(1, 1, 0.5))
            .terminal_cost(|x, _| 0.5 * x[0] * x[0])
            .terminal_grad(|x, _| x.clone())
    }

    #[test]
    fn driver_free_high_order_carries_terminal_value() {
        let spec = ProblemSpec::new(identity_terminal());
        let (grid, u, fwd, noise) = setup(&spec, 6, 1);
        let bwd = solve_backward_highorder(&spec, &grid, &u, &fwd, &noise, &DVector::zeros(0)).unwrap();
        let xn = fwd.terminal()[0];
        let h = grid.step_size();
        for n in 0..6 {
            assert_eq!(bwd.y(n)[0], xn);
            assert!((bwd.z(n)[(0, 0)] - 2.0 / h * xn * noise.omega_tilde(n)[0]).abs() < 1e-12);
        }
        assert_eq!(bwd.z(6)[(0, 0)], 0.0);
    }

    #[test]
    fn one_step_implicit_solve_matches_closed_form() {
        // Y_0 = Y_1 (1 + hc/2) / (1 - hc/2) with c = 1, h = 0.1, Y_1 = 2.
        let spec = ProblemSpec::new(
            CustomProblem::new(Dims::scalar())
                .terminal_grad(|_, _| DVector::from_element(1, 2.0))
                .drift_x(|_, _, _| DMatrix::from_element(1, 1, 1.0)),
        );
        let grid = TimeGrid::new(0.1, 1).unwrap();
        let u = ControlPath::zeros(grid, 1);
        let noise = NoisePath::sample(&grid, 1, &mut ChaCha8Rng::seed_from_u64(0));
        let fwd = simulate_forward(&spec, &grid, &u, &noise, &scalar(0.0)).unwrap();
        let bwd = solve_backward_highorder(&spec, &grid, &u, &fwd, &noise, &DVector::zeros(0)).unwrap();
        let expected = 2.0 * 1.05 / 0.95;
        assert!((bwd.y(0)[0] - expected).abs() < 1e-14);
        assert!((bwd.y(0)[0] - 2.210_526_315_789_474).abs() < 1e-12);
    }

    #[test]
    fn singular_implicit_matrix_is_rejected() {
        // 1 - (h/2) c = 0 with h = 0.1, c = 20.
        let spec =
            ProblemSpec::new(CustomProblem::new(Dims::scalar()).drift_x(|_, _, _| DMatrix::from_element(1, 1, 20.0)));
        let (grid, u, fwd, noise) = setup(&spec, 10, 2);
        let err = solve_backward_highorder(&spec, &grid, &u, &fwd, &noise, &DVector::zeros(0)).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { step: 9, .. }), "{err}");
    }

    #[test]
    fn singular_matrix_case_uses_lu_path() {
        let spec = ProblemSpec::new(
            CustomProblem::new(Dims::new(2, 1, 1).unwrap())
                .drift_x(|_, _, _| DMatrix::from_row_slice(2, 2, &[20.0, 0.0, 0.0, 1.0])),
        );
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let u = ControlPath::zeros(grid, 1);
        let noise = NoisePath::sample(&grid, 1, &mut ChaCha8Rng::seed_from_u64(0));
        let fwd = simulate_forward(&spec, &grid, &u, &noise, &DVector::zeros(2)).unwrap();
        let err = solve_backward_highorder(&spec, &grid, &u, &fwd, &noise, &DVector::zeros(0)).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }));
    }

    #[test]
    fn matrix_solve_agrees_with_scalar_components() {
        // A diagonal 2-d problem is two copies of the scalar problem.
        let diag = ProblemSpec::new(
            CustomProblem::new(Dims::new(2, 2, 2).unwrap())
                .drift_x(|_, _, _| DMatrix::from_diagonal(&DVector::from_vec(vec![0.7, -1.3])))
                .running_cost_x(|t, x, _| x.map(|v| v + t))
                .terminal_grad(|x, _| x.clone()),
        );
        let grid = TimeGrid::new(1.0, 5).unwrap();
        let u = ControlPath::zeros(grid, 2);
        let noise = NoisePath::sample(&grid, 2, &mut ChaCha8Rng::seed_from_u64(8));
        let fwd = simulate_forward(&diag, &grid, &u, &noise, &DVector::from_vec(vec![0.5, -0.5])).unwrap();
        let bwd = solve_backward_highorder(&diag, &grid, &u, &fwd, &noise, &DVector::zeros(0)).unwrap();
        for (k, c) in [0.7, -1.3].into_iter().enumerate() {
            let mut y = fwd.terminal()[k];
            let h = grid.step_size();
            for n in (0..5).rev() {
                let f_next = c * y + fwd.state(n + 1)[k] + grid.node(n + 1);
                y = (y + 0.5 * h * f_next + 0.5 * h * (fwd.state(n)[k] + grid.node(n))) / (1.0 - 0.5 * h * c);
                assert!((bwd.y(n)[k] - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn euler_without_driver_is_constant() {
        let spec = ProblemSpec::new(identity_terminal());
        let (grid, u, fwd, noise) = setup(&spec, 5, 4);
        let bwd = solve_backward_euler(&spec, &grid, &u, &fwd, &noise, &DVector::zeros(0)).unwrap();
        let h = grid.step_size();
        for n in 0..5 {
            assert_eq!(bwd.y(n)[0], fwd.terminal()[0]);
            assert!((bwd.z(n)[(0, 0)] - fwd.terminal()[0] * noise.omega(n)[0] / h).abs() < 1e-12);
        }
    }

    #[test]
    fn euler_unit_running_gradient_telescopes() {
        let spec = ProblemSpec::new(
            CustomProblem::new(Dims::scalar()).running_cost_x(|_, _, _| DVector::from_element(1, 1.0)),
        );
        let (grid, u, fwd, noise) = setup(&spec, 10, 5);
        let bwd = solve_backward_euler(&spec, &grid, &u, &fwd, &noise, &DVector::zeros(0)).unwrap();
        assert!((bwd.y(0)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn modes_agree_without_state_dependent_diffusion() {
        let base = || {
            identity_terminal()
                .drift_x(|_, _, u| DMatrix::from_element(1, 1, -u[0]))
                .running_cost_x(|_, x, _| x.clone())
                .terminal_hessian(|_, _| DMatrix::identity(1, 1))
        };
        let restricted = ProblemSpec::new(base());
        let general = ProblemSpec::new(base()).with_driver_mode(DriverMode::General);
        let (grid, u, fwd, noise) = setup(&restricted, 8, 6);
        let data = DVector::zeros(0);
        let a = solve_backward_highorder(&restricted, &grid, &u, &fwd, &noise, &data).unwrap();
        let b = solve_backward_highorder(&general, &grid, &u, &fwd, &noise, &data).unwrap();
        // Only the unread terminal Z differs.
        assert_eq!(a.ys(), b.ys());
        assert_eq!(&a.zs()[..8], &b.zs()[..8]);
    }

    #[test]
    fn general_mode_needs_terminal_hessian() {
        let spec = ProblemSpec::new(identity_terminal()).with_driver_mode(DriverMode::General);
        let (grid, u, fwd, noise) = setup(&spec, 3, 7);
        assert!(solve_backward_highorder(&spec, &grid, &u, &fwd, &noise, &DVector::zeros(0)).is_err());
    }

    #[test]
    fn backward_pass_is_deterministic() {
        let spec = ProblemSpec::new(identity_terminal().running_cost_x(|t, x, _| x.map(|v| v * t)));
        let (grid, u, fwd, noise) = setup(&spec, 12, 11);
        let data = DVector::zeros(0);
        let a = solve_backward_highorder(&spec, &grid, &u, &fwd, &noise, &data).unwrap();
        let b = solve_backward_highorder(&spec, &grid, &u, &fwd, &noise, &data).unwrap();
        assert_eq!(a, b);
    }
}
