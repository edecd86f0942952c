//! Projected sample-wise SGD on the control path.

use nalgebra::DVector;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backward::{solve_backward, BackwardPath, Scheme};
use crate::control::ControlPath;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::path::{simulate_forward, ForwardPath, NoisePath};
use crate::problem::{DriverMode, ProblemSpec};

/// Default step-size numerator.
pub const DEFAULT_THETA: f64 = 2.0;
/// Default step-size offset.
pub const DEFAULT_OFFSET: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Number of SGD iterations `K`.
    pub iterations: usize,
    pub theta: f64,
    /// Offset `M` in `eta_k = theta / (k + M)`.
    pub offset: f64,
    pub scheme: Scheme,
    /// Overrides the problem's own driver mode when set.
    pub driver_mode: Option<DriverMode>,
    pub seed: u64,
    /// Initial control; zeros when `None`.
    pub initial: Option<ControlPath>,
    /// Snapshot every this many iterations; 0 keeps only the final control.
    pub record_every: usize,
    /// Monte Carlo paths for the per-snapshot cost estimate; 0 disables it.
    pub cost_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            theta: DEFAULT_THETA,
            offset: DEFAULT_OFFSET,
            scheme: Scheme::HighOrder,
            driver_mode: None,
            seed: 0,
            initial: None,
            record_every: 0,
            cost_samples: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::Config(format!("theta must be positive, got {}", self.theta)));
        }
        if !(self.offset >= 0.0 && self.offset.is_finite()) {
            return Err(Error::Config(format!("offset M must be non-negative, got {}", self.offset)));
        }
        if self.offset == 0.0 {
            // eta_0 = theta / 0
            return Err(Error::Config("offset M = 0 makes the first step infinite".into()));
        }
        Ok(())
    }

    /// `eta_k = theta / (k + M)`.
    pub fn step_size(&self, k: usize) -> f64 {
        self.theta / (k as f64 + self.offset)
    }
}

/// Gradient-norm and cost trace recorded with a snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub control: ControlPath,
    /// RMS norm of the gradient estimate that produced this iterate
    /// (`None` for the initial control).
    pub grad_norm: Option<f64>,
    pub cost: Option<CostEstimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub control: ControlPath,
    pub snapshots: Vec<Snapshot>,
    /// RMS gradient norm at every iteration.
    pub grad_norms: Vec<f64>,
    /// Set when cost diagnostics are on and the last estimate is not below
    /// the first.
    pub cost_not_decreasing: bool,
}

/// Sample-wise gradient
/// `g_n = b_u^T Y_n + sum_j (sigma_u^j)^T Z_n^(j) + r_u` at every node.
pub fn estimate_gradient(
    problem: &ProblemSpec,
    u: &ControlPath,
    fwd: &ForwardPath,
    bwd: &BackwardPath,
) -> Result<Vec<DVector<f64>>> {
    let grid = u.grid();
    if fwd.grid() != grid || bwd.grid() != grid {
        return Err(Error::Config("gradient inputs live on different grids".into()));
    }
    let dims = problem.dims();
    if u.dim() != dims.control || bwd.y(0).len() != dims.state || bwd.z(0).ncols() != dims.noise {
        return Err(Error::Config(format!("gradient inputs do not match dims {dims:?}")));
    }
    let c = problem.coefficients();
    let grads = (0..=grid.steps())
        .map(|n| {
            let (t, x, un) = (grid.node(n), fwd.state(n), u.node(n));
            let z = bwd.z(n);
            let mut g = c.running_cost_u(t, x, un);
            g.gemv_tr(1.0, &c.drift_u(t, x, un), bwd.y(n), 1.0);
            for (j, su) in c.diffusion_u(t, x, un).iter().enumerate() {
                g.gemv_tr(1.0, su, &z.column(j), 1.0);
            }
            g
        })
        .collect();
    Ok(grads)
}

/// One sample-wise gradient at `u`: draws data, initial state and noise
/// from `rng`, runs both passes and assembles the gradient path.
pub fn sample_gradient<R: RngCore>(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    u: &ControlPath,
    scheme: Scheme,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let c = problem.coefficients();
    let data = c.sample_data(rng);
    let x0 = c.sample_x0(rng);
    let noise = NoisePath::sample(grid, problem.dims().noise, rng);
    let fwd = simulate_forward(problem, grid, u, &noise, &x0)?;
    let bwd = solve_backward(scheme, problem, grid, u, &fwd, &noise, &data)?;
    estimate_gradient(problem, u, &fwd, &bwd)
}

/// Projected SGD:
/// `u^{k+1}_n = P(u^k_n - eta_k g^k_n)` for all nodes, `k = 0..K-1`.
pub fn train(problem: &ProblemSpec, grid: &TimeGrid, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    let problem = match cfg.driver_mode {
        Some(mode) if mode != problem.driver_mode() => problem.clone().with_driver_mode(mode),
        _ => problem.clone(),
    };
    let dims = problem.dims();
    let mut u = match &cfg.initial {
        Some(u0) if u0.grid() != grid || u0.dim() != dims.control => {
            return Err(Error::Config("initial control does not match grid or dims".into()));
        }
        Some(u0) => u0.clone(),
        None => ControlPath::zeros(*grid, dims.control),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cost_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xc057_c057_c057_c057);
    {
        let c = problem.coefficients();
        let data = c.sample_data(&mut cost_rng);
        problem.validate_shapes(0.0, &c.sample_x0(&mut cost_rng), u.node(0), &data)?;
    }

    let constraint = problem.constraint().clone();
    let mut snapshots = Vec::new();
    let mut grad_norms = Vec::with_capacity(cfg.iterations);
    let mut snapshot = |k: usize, u: &ControlPath, grad_norm: Option<f64>, rng: &mut ChaCha8Rng| -> Result<()> {
        let cost = if cfg.cost_samples >= 2 {
            Some(cost_monte_carlo(&problem, grid, u, cfg.cost_samples, rng)?)
        } else {
            None
        };
        snapshots.push(Snapshot { iteration: k, control: u.clone(), grad_norm, cost });
        Ok(())
    };
    if cfg.record_every > 0 {
        snapshot(0, &u, None, &mut cost_rng)?;
    }

    for k in 0..cfg.iterations {
        let grads = sample_gradient(&problem, grid, &u, cfg.scheme, &mut rng)
            .map_err(|e| Error::TrainingAborted { iteration: k, cause: Box::new(e) })?;
        let eta = cfg.step_size(k);
        let mut sq = 0.0;
        for (un, g) in u.values_mut().iter_mut().zip(&grads) {
            un.axpy(-eta, g, 1.0);
            constraint.project_in_place(un);
            sq += g.norm_squared();
        }
        let norm = (sq / grads.len() as f64).sqrt();
        if !norm.is_finite() {
            return Err(Error::TrainingAborted { iteration: k, cause: Box::new(Error::DivergedAdjoint { step: 0 }) });
        }
        grad_norms.push(norm);
        let done = k + 1;
        if cfg.record_every > 0 && done % cfg.record_every == 0 && done != cfg.iterations {
            snapshot(done, &u, Some(norm), &mut cost_rng)?;
        }
    }
    snapshot(cfg.iterations, &u, grad_norms.last().copied(), &mut cost_rng)?;

    let costs: Vec<f64> = snapshots.iter().filter_map(|s| s.cost.map(|c| c.mean)).collect();
    let cost_not_decreasing = costs.len() >= 2 && costs[costs.len() - 1] >= costs[0];
    Ok(TrainResult { control: u, snapshots, grad_norms, cost_not_decreasing })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Diverged samples left out of the average.
    pub excluded: usize,
}

/// Monte Carlo estimate of `E[h sum_{n<N} r(t_n, X_n, u_n) + Phi(X_N)]`.
pub fn cost_monte_carlo<R: RngCore>(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    u: &ControlPath,
    samples: usize,
    rng: &mut R,
) -> Result<CostEstimate> {
    if samples < 2 {
        return Err(Error::Config("cost estimate needs at least two samples".into()));
    }
    let c = problem.coefficients();
    let mut values = Vec::with_capacity(samples);
    let mut excluded = 0;
    for _ in 0..samples {
        let data = c.sample_data(rng);
        let x0 = c.sample_x0(rng);
        let noise = NoisePath::sample(grid, problem.dims().noise, rng);
        match simulate_forward(problem, grid, u, &noise, &x0) {
            Ok(fwd) => {
                let v = path_cost(problem, grid, u, &fwd, &data);
                if v.is_finite() {
                    values.push(v);
                } else {
                    excluded += 1;
                }
            }
            Err(Error::DivergedPath { .. }) => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    if excluded * 100 > samples {
        return Err(Error::TooManyExclusions { excluded, total: samples });
    }
    let (mean, std_error) = crate::stats::mean_and_se(&values);
    Ok(CostEstimate { mean, std_error, excluded })
}

/// Left-endpoint running cost plus terminal loss along one path.
pub fn path_cost(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    u: &ControlPath,
    fwd: &ForwardPath,
    data: &DVector<f64>,
) -> f64 {
    let c = problem.coefficients();
    let h = grid.step_size();
    let running: f64 = (0..grid.steps()).map(|n| c.running_cost(grid.node(n), fwd.state(n), u.node(n))).sum();
    h * running + c.terminal_cost(fwd.terminal(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::BoxConstraint;
    use crate::problem::{CustomProblem, Dims};
    use nalgebra::DMatrix;

    fn regularizer_only() -> CustomProblem {
        CustomProblem::new(Dims::scalar())
            .drift(|_, _, u| u.clone())
            .drift_u(|_, _, _| DMatrix::identity(1, 1))
            .diffusion(|_, _, _| DMatrix::from_element(1, 1, 0.1))
            .running_cost(|_, _, u| 0.5 * u[0] * u[0])
            .running_cost_u(|_, _, u| u.clone())
    }

    #[test]
    fn step_sizes_decay() {
        let cfg = TrainConfig { theta: 2.0, offset: 50.0, ..TrainConfig::default() };
        assert_eq!(cfg.step_size(0), 2.0 / 50.0);
        let etas: Vec<f64> = (0..10_000).map(|k| cfg.step_size(k)).collect();
        assert!(etas.windows(2).all(|w| w[1] < w[0]));
        let sum: f64 = etas.iter().sum();
        let sum_sq: f64 = etas.iter().map(|e| e * e).sum();
        // Partial sums: harmonic growth vs a bounded tail theta^2 / (M - 1).
        assert!(sum > 2.0 * (10_050.0_f64 / 50.0).ln() - 0.1);
        assert!(sum_sq < 4.0 / 49.0);
    }

    #[test]
    fn invalid_schedule_is_rejected() {
        let spec = ProblemSpec::new(regularizer_only());
        let grid = TimeGrid::new(1.0, 4).unwrap();
        for cfg in [
            TrainConfig { theta: 0.0, ..TrainConfig::default() },
            TrainConfig { offset: -1.0, ..TrainConfig::default() },
            TrainConfig { offset: 0.0, ..TrainConfig::default() },
        ] {
            assert!(train(&spec, &grid, &cfg).is_err());
        }
    }

    #[test]
    fn zero_iterations_return_initial_control() {
        let spec = ProblemSpec::new(regularizer_only());
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let u0 = ControlPath::constant(grid, DVector::from_element(1, 0.8));
        let cfg = TrainConfig { iterations: 0, initial: Some(u0.clone()), ..TrainConfig::default() };
        let res = train(&spec, &grid, &cfg).unwrap();
        assert_eq!(res.control, u0);
        assert!(res.grad_norms.is_empty());
    }

    #[test]
    fn pure_regularizer_gradient_is_control() {
        let spec = ProblemSpec::new(regularizer_only());
        let grid = TimeGrid::new(1.0, 5).unwrap();
        let u = ControlPath::from_fn(grid, |t| DVector::from_element(1, 1.0 - t));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = sample_gradient(&spec, &grid, &u, Scheme::HighOrder, &mut rng).unwrap();
        for (gn, un) in g.iter().zip(u.values()) {
            assert_eq!(gn, un);
        }
    }

    #[test]
    fn quadratic_sanity_contracts_geometrically() {
        // g = u, so u^{k+1} = (1 - eta_k) u^k exactly.
        let spec = ProblemSpec::new(regularizer_only());
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let u0 = ControlPath::constant(grid, DVector::from_element(1, 1.0));
        let cfg = TrainConfig {
            iterations: 1000,
            theta: 2.0,
            offset: 50.0,
            initial: Some(u0.clone()),
            ..TrainConfig::default()
        };
        let res = train(&spec, &grid, &cfg).unwrap();
        let expected: f64 = (0..1000).map(|k| 1.0 - cfg.step_size(k)).product();
        let norm = |u: &ControlPath| u.values().iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
        assert!(norm(&res.control) <= 0.05 * norm(&u0));
        for v in res.control.values() {
            assert!((v[0] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn snapshots_follow_cadence_and_stay_feasible() {
        let spec =
            ProblemSpec::new(regularizer_only()).with_constraint(BoxConstraint::uniform(1, 0.2, 0.9).unwrap()).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let cfg = TrainConfig {
            iterations: 25,
            record_every: 10,
            cost_samples: 50,
            initial: Some(ControlPath::constant(grid, DVector::from_element(1, 0.9))),
            ..TrainConfig::default()
        };
        let res = train(&spec, &grid, &cfg).unwrap();
        let ks: Vec<usize> = res.snapshots.iter().map(|s| s.iteration).collect();
        assert_eq!(ks, vec![0, 10, 20, 25]);
        for s in &res.snapshots {
            assert!(s.control.is_feasible(spec.constraint()));
            assert!(s.cost.is_some());
        }
        assert!(res.control.values().iter().all(|v| v[0] >= 0.2));
        assert!(!res.cost_not_decreasing);
    }

    #[test]
    fn training_is_reproducible() {
        let spec = ProblemSpec::new(
            regularizer_only()
                .running_cost(|_, x, u| 0.5 * x[0] * x[0] + 0.5 * u[0] * u[0])
                .running_cost_x(|_, x, _| x.clone())
                .terminal_cost(|x, _| 0.5 * x[0] * x[0])
                .terminal_grad(|x, _| x.clone()),
        );
        let grid = TimeGrid::new(1.0, 6).unwrap();
        let cfg = TrainConfig { iterations: 200, seed: 77, record_every: 50, ..TrainConfig::default() };
        let a = train(&spec, &grid, &cfg).unwrap();
        let b = train(&spec, &grid, &cfg).unwrap();
        assert_eq!(a, b);
        let c = train(&spec, &grid, &TrainConfig { seed: 78, ..cfg }).unwrap();
        assert_ne!(a.control, c.control);
    }

    #[test]
    fn divergence_aborts_with_iteration() {
        let spec = ProblemSpec::new(
            CustomProblem::new(Dims::scalar())
                .drift(|_, _, u| u.map(|v| if v > 0.5 { f64::NAN } else { 0.0 }))
                .running_cost_u(|_, _, _| DVector::from_element(1, -10.0)),
        );
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let err = train(&spec, &grid, &TrainConfig { iterations: 10, ..TrainConfig::default() }).unwrap_err();
        match err {
            Error::TrainingAborted { iteration, cause } => {
                assert_eq!(iteration, 2);
                assert!(matches!(*cause, Error::DivergedPath { step: 1 }));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn cost_of_constant_terminal_loss() {
        let spec = ProblemSpec::new(CustomProblem::new(Dims::scalar()).terminal_cost(|_, _| 3.5));
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let u = ControlPath::zeros(grid, 1);
        let est = cost_monte_carlo(&spec, &grid, &u, 100, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(est.mean, 3.5);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn cost_of_unit_running_cost_is_horizon() {
        let spec = ProblemSpec::new(CustomProblem::new(Dims::scalar()).running_cost(|_, _, _| 1.0));
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let u = ControlPath::zeros(grid, 1);
        let est = cost_monte_carlo(&spec, &grid, &u, 10, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!((est.mean - 1.0).abs() < 1e-14);
        assert!(cost_monte_carlo(&spec, &grid, &u, 1, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn cost_rejects_mostly_diverged_paths() {
        let spec = ProblemSpec::new(
            CustomProblem::new(Dims::scalar())
                .diffusion(|_, _, _| DMatrix::from_element(1, 1, 1.0))
                .drift(|_, x, _| x.map(|v| if v > 1.0 { f64::INFINITY } else { 0.0 })),
        );
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let u = ControlPath::zeros(grid, 1);
        let err = cost_monte_carlo(&spec, &grid, &u, 1000, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::TooManyExclusions { .. }));
    }
}
