//! Two decoupled tracking problems with control-dependent noise:
//!
//! ```text
//! dX = (u - a_t) dt + sigma diag(u) dW
//! J  = 1/2 int E|X - X*_t|^2 dt + 1/2 int |u|^2 dt + 1/2 E|X_T|^2
//! ```

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use super::Benchmark;
use crate::error::{Error, Result};
use crate::problem::{Coefficients, Datum, Dims, ProblemSpec};

const HORIZON: f64 = 1.0;

/// Closed-form constants of the first benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example1 {
    sigma: f64,
    /// Terminal mean `X_T = [D/2, D sin 1]`.
    terminal_mean: [f64; 2],
}

impl Example1 {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameters(format!("sigma must be positive, got {sigma}")));
        }
        let s2 = sigma * sigma;
        let log_ratio = (1.0 + s2 / (1.0 + s2)).ln();
        let d = log_ratio / (s2 + log_ratio);
        Ok(Self { sigma, terminal_mean: [d / 2.0, d * 1f64.sin()] })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `D = ln(1 + s^2/(1+s^2)) / (s^2 + ln(1 + s^2/(1+s^2)))`.
    pub fn d(&self) -> f64 {
        2.0 * self.terminal_mean[0]
    }

    pub fn terminal_mean(&self) -> [f64; 2] {
        self.terminal_mean
    }

    /// `beta_t = (1 + s^2) + s^2 (1 - t)`.
    pub fn beta(&self, t: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        (1.0 + s2) + s2 * (1.0 - t)
    }

    /// `alpha_t = ln((1 + 2 s^2) / (s^2 (2 - t) + 1))`.
    pub fn alpha(&self, t: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        ((1.0 + 2.0 * s2) / (s2 * (2.0 - t) + 1.0)).ln()
    }

    /// Drift offset `a_t = [-t^2 / (2 beta_t), -sin t / beta_t]`.
    pub fn offset(&self, t: f64) -> [f64; 2] {
        let beta = self.beta(t);
        [-t * t / (2.0 * beta), -t.sin() / beta]
    }

    pub fn target(&self, t: f64) -> DVector<f64> {
        let s2 = self.sigma * self.sigma;
        let alpha = self.alpha(t);
        let [x1, x2] = self.terminal_mean;
        DVector::from_vec(vec![t + alpha * (0.5 - x1) / s2, t.cos() + alpha * (1f64.sin() - x2) / s2])
    }

    pub fn optimal_control(&self, t: f64) -> DVector<f64> {
        let beta = self.beta(t);
        let [x1, x2] = self.terminal_mean;
        DVector::from_vec(vec![
            (-t * t / 2.0 + HORIZON * HORIZON / 2.0 - x1) / beta,
            (-t.sin() + 1f64.sin() - x2) / beta,
        ])
    }
}

impl Coefficients for Example1 {
    fn dims(&self) -> Dims {
        Dims { state: 2, control: 2, noise: 2 }
    }

    fn drift(&self, t: f64, _x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let a = self.offset(t);
        DVector::from_vec(vec![u[0] - a[0], u[1] - a[1]])
    }

    fn diffusion(&self, _t: f64, _x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&(self.sigma * u))
    }

    fn running_cost(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        0.5 * (x - self.target(t)).norm_squared() + 0.5 * u.norm_squared()
    }

    fn terminal_cost(&self, x: &DVector<f64>, _data: &Datum) -> f64 {
        0.5 * x.norm_squared()
    }

    fn terminal_grad(&self, x: &DVector<f64>, _data: &Datum) -> DVector<f64> {
        x.clone()
    }

    fn terminal_hessian(&self, _x: &DVector<f64>, _data: &Datum) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(2, 2))
    }

    fn drift_x(&self, _t: f64, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(2, 2)
    }

    fn drift_u(&self, _t: f64, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(2, 2)
    }

    fn diffusion_x(&self, _t: f64, _x: &DVector<f64>, _u: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(2, 2); 2]
    }

    fn diffusion_u(&self, _t: f64, _x: &DVector<f64>, _u: &DVector<f64>) -> Vec<DMatrix<f64>> {
        (0..2)
            .map(|j| {
                let mut m = DMatrix::zeros(2, 2);
                m[(j, j)] = self.sigma;
                m
            })
            .collect()
    }

    fn running_cost_x(&self, t: f64, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        x - self.target(t)
    }

    fn running_cost_u(&self, _t: f64, _x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        u.clone()
    }

    fn sample_x0(&self, _rng: &mut dyn RngCore) -> DVector<f64> {
        DVector::zeros(2)
    }
}

/// First benchmark with `X_0 = 0`, `T = 1` and restricted driver.
pub fn example1_problem(sigma: f64) -> Result<Benchmark> {
    let ex = Example1::new(sigma)?;
    let problem = ProblemSpec::new(ex).with_label("example1");
    Ok(Benchmark::new("example1", problem, HORIZON, move |t| ex.optimal_control(t), move |t| ex.target(t)))
}
