//! Two decoupled geometric (Black-Scholes type) tracking problems:
//!
//! ```text
//! dX = u X dt + sigma X dW
//! J  = 1/2 int E|X - X*_t|^2 dt + 1/2 int |u|^2 dt
//! ```
//!
//! The diffusion depends on the state, so the default adjoint driver is the
//! general one.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use super::Benchmark;
use crate::error::{Error, Result};
use crate::problem::{Coefficients, Datum, Dims, DriverMode, ProblemSpec};

const HORIZON: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example2 {
    sigma: f64,
    x0: f64,
}

impl Example2 {
    pub fn new(sigma: f64, x0: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameters(format!("sigma must be positive, got {sigma}")));
        }
        if !(x0 > 0.0 && x0.is_finite()) {
            return Err(Error::InvalidParameters(format!("x0 must be positive, got {x0}")));
        }
        let ex = Self { sigma, x0 };
        // Both denominators are monotone or convex on [0, T]; a dense scan
        // also covers the endpoints.
        let scan = 1000;
        for i in 0..=scan {
            let t = HORIZON * i as f64 / scan as f64;
            let [d1, d2] = ex.denominators(t);
            if !(d1 > 0.0 && d2 > 0.0) {
                return Err(Error::InvalidParameters(format!(
                    "optimal-control denominator is nonpositive at t = {t} for x0 = {x0}"
                )));
            }
        }
        Ok(ex)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    /// `[1/x0 - T t + t^2/2, 1/x0 + 1 - e^{-t} - t e^{-T}]`.
    pub fn denominators(&self, t: f64) -> [f64; 2] {
        let inv = 1.0 / self.x0;
        [inv - HORIZON * t + t * t / 2.0, inv + 1.0 - (-t).exp() - t * (-HORIZON).exp()]
    }

    pub fn target(&self, t: f64) -> DVector<f64> {
        let [d1, d2] = self.denominators(t);
        let growth = (self.sigma * self.sigma * t).exp();
        let gap = (-HORIZON).exp() - (-t).exp();
        DVector::from_vec(vec![(growth - (HORIZON - t).powi(2)) / d1 + 1.0, (growth - gap * gap) / d2 - (-t).exp()])
    }

    pub fn optimal_control(&self, t: f64) -> DVector<f64> {
        let [d1, d2] = self.denominators(t);
        DVector::from_vec(vec![(HORIZON - t) / d1, ((-HORIZON).exp() - (-t).exp()) / d2])
    }
}

impl Coefficients for Example2 {
    fn dims(&self) -> Dims {
        Dims { state: 2, control: 2, noise: 2 }
    }

    fn drift(&self, _t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        u.component_mul(x)
    }

    fn diffusion(&self, _t: f64, x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&(self.sigma * x))
    }

    fn running_cost(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        0.5 * (x - self.target(t)).norm_squared() + 0.5 * u.norm_squared()
    }

    fn terminal_cost(&self, _x: &DVector<f64>, _data: &Datum) -> f64 {
        0.0
    }

    fn terminal_grad(&self, _x: &DVector<f64>, _data: &Datum) -> DVector<f64> {
        DVector::zeros(2)
    }

    fn terminal_hessian(&self, _x: &DVector<f64>, _data: &Datum) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(2, 2))
    }

    fn drift_x(&self, _t: f64, _x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(u)
    }

    fn drift_u(&self, _t: f64, x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(x)
    }

    fn diffusion_x(&self, _t: f64, _x: &DVector<f64>, _u: &DVector<f64>) -> Vec<DMatrix<f64>> {
        (0..2)
            .map(|j| {
                let mut m = DMatrix::zeros(2, 2);
                m[(j, j)] = self.sigma;
                m
            })
            .collect()
    }

    fn diffusion_u(&self, _t: f64, _x: &DVector<f64>, _u: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(2, 2); 2]
    }

    fn running_cost_x(&self, t: f64, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        x - self.target(t)
    }

    fn running_cost_u(&self, _t: f64, _x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        u.clone()
    }

    fn sample_x0(&self, _rng: &mut dyn RngCore) -> DVector<f64> {
        DVector::from_element(2, self.x0)
    }
}

/// Second benchmark with `T = 1` and the general driver.
pub fn example2_problem(sigma: f64, x0: f64) -> Result<Benchmark> {
    let ex = Example2::new(sigma, x0)?;
    let problem = ProblemSpec::new(ex).with_label("example2").with_driver_mode(DriverMode::General);
    Ok(Benchmark::new("example2", problem, HORIZON, move |t| ex.optimal_control(t), move |t| ex.target(t)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_at_start_and_end() {
        let ex = Example2::new(0.1, 1.0).unwrap();
        assert_eq!(ex.optimal_control(0.0)[0], 1.0);
        let end = ex.optimal_control(1.0);
        assert_eq!(end[0], 0.0);
        assert_eq!(end[1], 0.0);
    }

    #[test]
    fn target_at_start() {
        let ex = Example2::new(0.1, 1.0).unwrap();
        let x = ex.target(0.0);
        // (1 - 1)/1 + 1 and -(e^{-1} - 1)^2
        assert!((x[0] - 1.0).abs() < 1e-15);
        assert!((x[1] + (f64::exp(-1.0) - 1.0).powi(2)).abs() < 1e-15);
        assert!((x[1] + 0.399_576_400_893_728).abs() < 1e-13);
    }

    #[test]
    fn invalid_parameters() {
        assert!(example2_problem(0.0, 1.0).is_err());
        assert!(example2_problem(0.1, -1.0).is_err());
        // 1/x0 - T^2/2 <= 0 once x0 >= 2.
        assert!(example2_problem(0.1, 2.5).is_err());
        assert!(example2_problem(0.1, 1.9).is_ok());
    }

    #[test]
    fn default_driver_is_general() {
        let b = example2_problem(0.1, 1.0).unwrap();
        assert_eq!(b.problem().driver_mode(), DriverMode::General);
    }
}
