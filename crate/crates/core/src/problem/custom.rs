use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use super::{Coefficients, Datum, Dims};

type VecFn = Box<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatFn = Box<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type MatListFn = Box<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync>;
type ScalarFn = Box<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;
type TerminalFn = Box<dyn Fn(&DVector<f64>, &Datum) -> f64 + Send + Sync>;
type TerminalVecFn = Box<dyn Fn(&DVector<f64>, &Datum) -> DVector<f64> + Send + Sync>;
type TerminalMatFn = Box<dyn Fn(&DVector<f64>, &Datum) -> DMatrix<f64> + Send + Sync>;
type SamplerFn<T> = Box<dyn Fn(&mut dyn RngCore) -> T + Send + Sync>;

/// Closure-backed [`Coefficients`]. Every function defaults to zero of the
/// right shape and the initial state defaults to the origin.
pub struct CustomProblem {
    dims: Dims,
    drift: VecFn,
    diffusion: MatFn,
    running_cost: ScalarFn,
    terminal_cost: TerminalFn,
    terminal_grad: TerminalVecFn,
    terminal_hessian: Option<TerminalMatFn>,
    drift_x: MatFn,
    drift_u: MatFn,
    diffusion_x: MatListFn,
    diffusion_u: MatListFn,
    running_cost_x: VecFn,
    running_cost_u: VecFn,
    data_sampler: SamplerFn<Datum>,
    x0_sampler: SamplerFn<DVector<f64>>,
}

impl CustomProblem {
    pub fn new(dims: Dims) -> Self {
        let Dims { state: p, control: m, noise: q } = dims;
        Self {
            dims,
            drift: Box::new(move |_, _, _| DVector::zeros(p)),
            diffusion: Box::new(move |_, _, _| DMatrix::zeros(p, q)),
            running_cost: Box::new(|_, _, _| 0.0),
            terminal_cost: Box::new(|_, _| 0.0),
            terminal_grad: Box::new(move |_, _| DVector::zeros(p)),
            terminal_hessian: None,
            drift_x: Box::new(move |_, _, _| DMatrix::zeros(p, p)),
            drift_u: Box::new(move |_, _, _| DMatrix::zeros(p, m)),
            diffusion_x: Box::new(move |_, _, _| vec![DMatrix::zeros(p, p); q]),
            diffusion_u: Box::new(move |_, _, _| vec![DMatrix::zeros(p, m); q]),
            running_cost_x: Box::new(move |_, _, _| DVector::zeros(p)),
            running_cost_u: Box::new(move |_, _, _| DVector::zeros(m)),
            data_sampler: Box::new(|_| DVector::zeros(0)),
            x0_sampler: Box::new(move |_| DVector::zeros(p)),
        }
    }

    pub fn drift(
        mut self,
        f: impl Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.drift = Box::new(f);
        self
    }

    pub fn diffusion(
        mut self,
        f: impl Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.diffusion = Box::new(f);
        self
    }

    pub fn running_cost(
        mut self,
        f: impl Fn(f64, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.running_cost = Box::new(f);
        self
    }

    pub fn terminal_cost(mut self, f: impl Fn(&DVector<f64>, &Datum) -> f64 + Send + Sync + 'static) -> Self {
        self.terminal_cost = Box::new(f);
        self
    }

    pub fn terminal_grad(mut self, f: impl Fn(&DVector<f64>, &Datum) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.terminal_grad = Box::new(f);
        self
    }

    pub fn terminal_hessian(
        mut self,
        f: impl Fn(&DVector<f64>, &Datum) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.terminal_hessian = Some(Box::new(f));
        self
    }

    pub fn drift_x(
        mut self,
        f: impl Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.drift_x = Box::new(f);
        self
    }

    pub fn drift_u(
        mut self,
        f: impl Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.drift_u = Box::new(f);
        self
    }

    pub fn diffusion_x(
        mut self,
        f: impl Fn(f64, &DVector<f64>, &DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.diffusion_x = Box::new(f);
        self
    }

    pub fn diffusion_u(
        mut self,
        f: impl Fn(f64, &DVector<f64>, &DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.diffusion_u = Box::new(f);
        self
    }

    pub fn running_cost_x(
        mut self,
        f: impl Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.running_cost_x = Box::new(f);
        self
    }

    pub fn running_cost_u(
        mut self,
        f: impl Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.running_cost_u = Box::new(f);
        self
    }

    pub fn data_sampler(mut self, f: impl Fn(&mut dyn RngCore) -> Datum + Send + Sync + 'static) -> Self {
        self.data_sampler = Box::new(f);
        self
    }

    pub fn x0_sampler(mut self, f: impl Fn(&mut dyn RngCore) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.x0_sampler = Box::new(f);
        self
    }

    /// Deterministic initial state.
    pub fn x0(self, x0: DVector<f64>) -> Self {
        self.x0_sampler(move |_| x0.clone())
    }
}

impl Coefficients for CustomProblem {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn drift(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.drift)(t, x, u)
    }

    fn diffusion(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        (self.diffusion)(t, x, u)
    }

    fn running_cost(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (self.running_cost)(t, x, u)
    }

    fn terminal_cost(&self, x: &DVector<f64>, data: &Datum) -> f64 {
        (self.terminal_cost)(x, data)
    }

    fn terminal_grad(&self, x: &DVector<f64>, data: &Datum) -> DVector<f64> {
        (self.terminal_grad)(x, data)
    }

    fn terminal_hessian(&self, x: &DVector<f64>, data: &Datum) -> Option<DMatrix<f64>> {
        self.terminal_hessian.as_ref().map(|f| f(x, data))
    }

    fn drift_x(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        (self.drift_x)(t, x, u)
    }

    fn drift_u(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        (self.drift_u)(t, x, u)
    }

    fn diffusion_x(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> Vec<DMatrix<f64>> {
        (self.diffusion_x)(t, x, u)
    }

    fn diffusion_u(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> Vec<DMatrix<f64>> {
        (self.diffusion_u)(t, x, u)
    }

    fn running_cost_x(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.running_cost_x)(t, x, u)
    }

    fn running_cost_u(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.running_cost_u)(t, x, u)
    }

    fn sample_data(&self, rng: &mut dyn RngCore) -> Datum {
        (self.data_sampler)(rng)
    }

    fn sample_x0(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        (self.x0_sampler)(rng)
    }
}
