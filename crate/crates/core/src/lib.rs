//! Training engine for Neural SDE models posed as stochastic optimal control.
//!
//! The control path `u` of `dX = b(t, X, u) dt + sigma(t, X, u) dW` is
//! trained by projected stochastic gradient descent. Each iteration draws a
//! single sample path, runs the forward Euler pass, a sample-wise adjoint
//! (backward) pass and assembles an unbiased estimate of the discrete
//! gradient. The adjoint pass comes in a second-order trapezoidal flavour
//! and a first-order explicit Euler baseline.
//!
//! Module map:
//! - [`problem`], [`constraint`], [`control`], [`grid`]: problem description.
//! - [`path`]: increment sampling and the forward pass.
//! - [`backward`]: the adjoint schemes.
//! - [`trainer`]: gradient estimate, SGD loop, cost estimate.
//! - [`benchmarks`]: closed-form test problems and convergence studies.
//! - [`oracle`]: brute-force verifiers.
//! - [`cli`]: the command-line front end.

pub mod backward;
pub mod benchmarks;
pub mod cli;
pub mod constraint;
pub mod control;
pub mod error;
pub mod grid;
pub mod oracle;
pub mod path;
pub mod problem;
pub mod seed;
pub mod stats;
pub mod trainer;
pub mod validation;

pub use backward::{solve_backward, solve_backward_euler, solve_backward_highorder, BackwardPath, Scheme};
pub use constraint::{project_box, BoxConstraint};
pub use control::ControlPath;
pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use path::{sample_increment_pair, simulate_forward, ForwardPath, NoisePath};
pub use problem::{check_derivatives, Coefficients, CustomProblem, Datum, Dims, DriverMode, ProblemSpec};
pub use trainer::{cost_monte_carlo, estimate_gradient, train, TrainConfig, TrainResult};
