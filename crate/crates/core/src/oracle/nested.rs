use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::OracleEstimate;
use crate::backward::{driver, implicit_solve, terminal_values, Scheme};
use crate::control::ControlPath;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::path::sample_increment_pair;
use crate::problem::{Datum, DriverMode, ProblemSpec};
use crate::seed::derive;

/// Deepest grid the nested estimator accepts; cost grows like
/// `outer * inner^(N-1)`.
pub const MAX_NESTED_STEPS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct NestedConfig {
    /// Branches spawned from the initial state.
    pub outer: usize,
    /// Branches spawned from every later state.
    pub inner: usize,
    pub scheme: Scheme,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NestedEstimate {
    pub y0: OracleEstimate,
    pub z0: OracleEstimate,
}

/// Conditional-expectation solution at `x0` with every expectation
/// replaced by literal nested Monte Carlo over one-step branches.
///
/// High-order scheme:
///
/// ```text
/// (h/2) Z_n = E[Y_{n+1} dW~] + h E[f_{n+1} dW~]
/// Y_n = E[Y_{n+1}] + h/2 f_n + h/2 E[f_{n+1}]
/// ```
///
/// Euler: `Y_n = E[Y_{n+1} + h f_{n+1}]`, `Z_n = E[Y_{n+1} dW] / h`.
///
/// Standard errors are summed over nesting levels, which overstates them.
pub fn nested_mc_bsde(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    u: &ControlPath,
    x0: &DVector<f64>,
    data: &Datum,
    cfg: &NestedConfig,
) -> Result<NestedEstimate> {
    if grid.steps() > MAX_NESTED_STEPS {
        return Err(Error::OracleRefused(format!(
            "nested Monte Carlo limited to N <= {MAX_NESTED_STEPS}, got {}",
            grid.steps()
        )));
    }
    if cfg.outer < 2 || cfg.inner < 2 {
        return Err(Error::Config("nested Monte Carlo needs at least two branches per level".into()));
    }
    if u.grid() != grid || u.dim() != problem.dims().control || x0.len() != problem.dims().state {
        return Err(Error::Config("control, grid and initial state disagree".into()));
    }
    let solver = Nested { problem, grid, u, data, cfg };

    // Outer branches run in parallel on derived streams and are reduced in
    // index order.
    let branches: Vec<Result<Branch>> = (0..cfg.outer)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, i as u64));
            solver.branch(0, x0, &mut rng)
        })
        .collect();
    let branches = branches.into_iter().collect::<Result<Vec<_>>>()?;
    let level = solver.combine(0, x0, &branches)?;

    let leaves = cfg.outer * cfg.inner.pow(grid.steps().saturating_sub(1) as u32);
    Ok(NestedEstimate {
        y0: OracleEstimate {
            value: level.y.as_slice().to_vec(),
            standard_error: level.se_y.as_slice().to_vec(),
            samples_used: leaves,
        },
        z0: OracleEstimate {
            value: level.z.as_slice().to_vec(),
            standard_error: level.se_z.as_slice().to_vec(),
            samples_used: leaves,
        },
    })
}

struct Nested<'a> {
    problem: &'a ProblemSpec,
    grid: &'a TimeGrid,
    u: &'a ControlPath,
    data: &'a Datum,
    cfg: &'a NestedConfig,
}

/// `(Y_n, Z_n)` at one state with componentwise standard errors.
struct Level {
    y: DVector<f64>,
    z: DMatrix<f64>,
    se_y: DVector<f64>,
    se_z: DMatrix<f64>,
}

/// What one branch `x_n -> x_{n+1}` contributes to the level at `x_n`.
struct Branch {
    /// Terms averaged into `Y_n`.
    y_term: DVector<f64>,
    /// Terms averaged into `Z_n`.
    z_term: DMatrix<f64>,
    se_y_term: DVector<f64>,
    se_z_term: DMatrix<f64>,
}

impl Nested<'_> {
    fn level(&self, n: usize, x: &DVector<f64>, rng: &mut ChaCha8Rng) -> Result<Level> {
        let steps = self.grid.steps();
        if n == steps {
            let (y, z) = terminal_values(self.problem, self.grid.node(n), x, self.u.node(n), self.data)?;
            let (p, q) = z.shape();
            return Ok(Level { y, z, se_y: DVector::zeros(p), se_z: DMatrix::zeros(p, q) });
        }
        let branches = (0..self.cfg.inner).map(|_| self.branch(n, x, rng)).collect::<Result<Vec<_>>>()?;
        self.combine(n, x, &branches)
    }

    fn branch(&self, n: usize, x: &DVector<f64>, rng: &mut ChaCha8Rng) -> Result<Branch> {
        let c = self.problem.coefficients();
        let mode = self.problem.driver_mode();
        let h = self.grid.step_size();
        let (t, un) = (self.grid.node(n), self.u.node(n));
        let (omega, omega_tilde) = sample_increment_pair(h, self.problem.dims().noise, rng)?;
        let mut next = c.diffusion(t, x, un) * &omega;
        next.axpy(h, &c.drift(t, x, un), 1.0);
        next += x;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergedPath { step: n + 1 });
        }

        let child = self.level(n + 1, &next, rng)?;
        let (t1, u1) = (self.grid.node(n + 1), self.u.node(n + 1));
        let f = driver(c, mode, t1, &next, u1, &child.y, &child.z);

        // Bound on the error of f inherited from the child's estimates.
        let mut se_f = c.drift_x(t1, &next, u1).abs().transpose() * &child.se_y;
        if mode == DriverMode::General {
            for (j, sx) in c.diffusion_x(t1, &next, u1).iter().enumerate() {
                se_f += sx.abs().transpose() * child.se_z.column(j);
            }
        }

        Ok(match self.cfg.scheme {
            Scheme::HighOrder => {
                let y_term = &child.y + (0.5 * h) * &f;
                let carried = &child.y + h * &f;
                let se_carried = &child.se_y + h * &se_f;
                Branch {
                    y_term,
                    z_term: carried * omega_tilde.transpose(),
                    se_y_term: &child.se_y + (0.5 * h) * &se_f,
                    se_z_term: se_carried * omega_tilde.abs().transpose(),
                }
            }
            Scheme::Euler => Branch {
                y_term: &child.y + h * &f,
                z_term: &child.y * omega.transpose(),
                se_y_term: &child.se_y + h * &se_f,
                se_z_term: &child.se_y * omega.abs().transpose(),
            },
        })
    }

    fn combine(&self, n: usize, x: &DVector<f64>, branches: &[Branch]) -> Result<Level> {
        let c = self.problem.coefficients();
        let h = self.grid.step_size();
        let (t, un) = (self.grid.node(n), self.u.node(n));
        let count = branches.len() as f64;

        let (y_mean, y_se) = mean_se(branches.iter().map(|b| b.y_term.as_slice()));
        let (z_mean, z_se) = mean_se(branches.iter().map(|b| b.z_term.as_slice()));
        let inherited_y = branches.iter().fold(DVector::zeros(x.len()), |acc, b| acc + &b.se_y_term) / count;
        let (p, q) = branches[0].z_term.shape();
        let inherited_z = branches.iter().fold(DMatrix::zeros(p, q), |acc, b| acc + &b.se_z_term) / count;

        let ey = DVector::from_vec(y_mean);
        let ez = DMatrix::from_vec(p, q, z_mean);
        let se_ey = DVector::from_vec(y_se) + inherited_y;
        let se_ez = DMatrix::from_vec(p, q, z_se) + inherited_z;

        match self.cfg.scheme {
            Scheme::HighOrder => {
                let z = (2.0 / h) * ez;
                let se_z = (2.0 / h) * se_ez;
                let mut rhs = c.running_cost_x(t, x, un);
                let mut se_rhs = se_ey.clone();
                if self.problem.driver_mode() == DriverMode::General {
                    rhs += crate::backward::diffusion_term(c, t, x, un, &z);
                    for (j, sx) in c.diffusion_x(t, x, un).iter().enumerate() {
                        se_rhs += (0.5 * h) * (sx.abs().transpose() * se_z.column(j));
                    }
                }
                rhs *= 0.5 * h;
                rhs += &ey;
                let drift_x = c.drift_x(t, x, un);
                let y = implicit_solve(&drift_x, h, rhs, n)?;
                let inverse = implicit_inverse(&drift_x, h, n)?;
                let se_y = inverse.abs() * se_rhs;
                Ok(Level { y, z, se_y, se_z })
            }
            Scheme::Euler => Ok(Level { y: ey, z: ez / h, se_y: se_ey, se_z: se_ez / h }),
        }
    }
}

fn implicit_inverse(drift_x: &DMatrix<f64>, h: f64, step: usize) -> Result<DMatrix<f64>> {
    let p = drift_x.nrows();
    let mut inv = DMatrix::zeros(p, p);
    for k in 0..p {
        let mut e = DVector::zeros(p);
        e[k] = 1.0;
        inv.set_column(k, &implicit_solve(drift_x, h, e, step)?);
    }
    Ok(inv)
}

/// Componentwise mean and standard error of equally long slices.
fn mean_se<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone) -> (Vec<f64>, Vec<f64>) {
    let mut count = 0usize;
    let mut mean: Vec<f64> = Vec::new();
    for r in rows.clone() {
        if mean.is_empty() {
            mean = vec![0.0; r.len()];
        }
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
        count += 1;
    }
    for m in &mut mean {
        *m /= count as f64;
    }
    let mut var = vec![0.0; mean.len()];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    let se =
        var.into_iter().map(|s| if count > 1 { (s / (count - 1) as f64 / count as f64).sqrt() } else { 0.0 }).collect();
    (mean, se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::linear_test_problem;
    use crate::problem::{CustomProblem, Dims};

    fn cfg(outer: usize, inner: usize, seed: u64) -> NestedConfig {
        NestedConfig { outer, inner, scheme: Scheme::HighOrder, seed }
    }

    #[test]
    fn constant_terminal_gradient_is_exact() {
        let spec = ProblemSpec::new(
            CustomProblem::new(Dims::scalar())
                .diffusion(|_, _, _| DMatrix::from_element(1, 1, 0.4))
                .terminal_grad(|_, _| DVector::from_element(1, 1.7)),
        );
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let u = ControlPath::zeros(grid, 1);
        let est = nested_mc_bsde(&spec, &grid, &u, &DVector::zeros(1), &DVector::zeros(0), &cfg(50, 50, 1)).unwrap();
        assert!((est.y0.value[0] - 1.7).abs() < 1e-12);
        assert!(est.y0.standard_error[0] < 1e-12);
    }

    #[test]
    fn one_step_identity_terminal_recovers_diffusion() {
        // Z_0 = (2/h) E[X_1 dW~] = (2/h) s h/2 = s.
        let s = 0.6;
        let spec = ProblemSpec::new(
            CustomProblem::new(Dims::scalar())
                .diffusion(move |_, _, _| DMatrix::from_element(1, 1, s))
                .terminal_grad(|x, _| x.clone()),
        );
        let grid = TimeGrid::new(0.5, 1).unwrap();
        let u = ControlPath::zeros(grid, 1);
        let x0 = DVector::from_element(1, 0.3);
        let est = nested_mc_bsde(&spec, &grid, &u, &x0, &DVector::zeros(0), &cfg(200_000, 2, 2)).unwrap();
        assert!((est.y0.value[0] - 0.3).abs() <= 3.0 * est.y0.standard_error[0]);
        assert!((est.z0.value[0] - s).abs() <= 3.0 * est.z0.standard_error[0], "{:?}", est.z0);
    }

    #[test]
    fn linear_problem_matches_affine_recursion() {
        // Y_n(x) = a_n x + c_n with a_n = a_{n+1} + h,
        // c_n = c_{n+1} + h u_n (a_{n+1} + h/2), Z_n = s (a_{n+1} + h).
        let (s, x0, un) = (0.2, 0.5, 0.3);
        let spec = linear_test_problem(x0);
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let h = grid.step_size();
        let u = ControlPath::constant(grid, DVector::from_element(1, un));
        let (mut a, mut c) = (1.0, 0.0);
        let mut z0 = 0.0;
        for _ in 0..2 {
            z0 = s * (a + h);
            c += h * un * (a + h / 2.0);
            a += h;
        }
        let y0 = a * x0 + c;
        let est =
            nested_mc_bsde(&spec, &grid, &u, &DVector::from_element(1, x0), &DVector::zeros(0), &cfg(4000, 400, 3))
                .unwrap();
        assert!((est.y0.value[0] - y0).abs() <= 3.0 * est.y0.standard_error[0], "{:?} vs {y0}", est.y0);
        assert!((est.z0.value[0] - z0).abs() <= 3.0 * est.z0.standard_error[0], "{:?} vs {z0}", est.z0);
    }

    #[test]
    fn refuses_deep_grids() {
        let spec = linear_test_problem(0.0);
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let u = ControlPath::zeros(grid, 1);
        let err =
            nested_mc_bsde(&spec, &grid, &u, &DVector::zeros(1), &DVector::zeros(0), &cfg(10, 10, 0)).unwrap_err();
        assert!(matches!(err, Error::OracleRefused(_)));
    }

    #[test]
    fn reproducible_for_fixed_seed() {
        let spec = linear_test_problem(0.1);
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let u = ControlPath::constant(grid, DVector::from_element(1, 0.3));
        let run = || {
            nested_mc_bsde(&spec, &grid, &u, &DVector::from_element(1, 0.1), &DVector::zeros(0), &cfg(100, 20, 9))
                .unwrap()
        };
        assert_eq!(run(), run());
    }
}
