//! Small scalar problems used by the verification suite.

use nalgebra::{DMatrix, DVector};

use crate::problem::{CustomProblem, Dims, ProblemSpec};

/// `dX = u dt + 0.2 dW`, `r = x^2/2 + u^2/2`, `Phi = x^2/2`, `X_0 = x0`.
///
/// Every conditional expectation of the adjoint schemes is a Gaussian
/// integral of an affine function, which makes closed forms available.
pub fn linear_test_problem(x0: f64) -> ProblemSpec {
    ProblemSpec::new(
        CustomProblem::new(Dims::scalar())
            .drift(|_, _, u| u.clone())
            .drift_u(|_, _, _| DMatrix::identity(1, 1))
            .diffusion(|_, _, _| DMatrix::from_element(1, 1, 0.2))
            .running_cost(|_, x, u| 0.5 * x[0] * x[0] + 0.5 * u[0] * u[0])
            .running_cost_x(|_, x, _| x.clone())
            .running_cost_u(|_, _, u| u.clone())
            .terminal_cost(|x, _| 0.5 * x[0] * x[0])
            .terminal_grad(|x, _| x.clone())
            .terminal_hessian(|_, _| DMatrix::identity(1, 1))
            .x0(DVector::from_element(1, x0)),
    )
    .with_label("linear")
}

/// `dX = u dt + 0.1 dW`, `r = u^2/2`, `Phi = 0`: the gradient is exactly `u`.
pub fn quadratic_sanity_problem() -> ProblemSpec {
    ProblemSpec::new(
        CustomProblem::new(Dims::scalar())
            .drift(|_, _, u| u.clone())
            .drift_u(|_, _, _| DMatrix::identity(1, 1))
            .diffusion(|_, _, _| DMatrix::from_element(1, 1, 0.1))
            .running_cost(|_, _, u| 0.5 * u[0] * u[0])
            .running_cost_u(|_, _, u| u.clone()),
    )
    .with_label("quadratic")
}
