use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Joint sampler for the increment pair `(dW, dW~)` over one step, where
/// `dW~ = 2 dW - (3/h) int (r - t_n) dW_r`.
///
/// Each component draws two independent standard normals and returns
/// `omega = sqrt(h) xi1`, `omega~ = sqrt(h) (a xi1 + b xi2)`; the exact law
/// (`Var = h` for both, `Cov = h/2`) needs `a = 1/2`, `b = sqrt(3)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementSampler {
    shared: f64,
    independent: f64,
}

impl Default for IncrementSampler {
    fn default() -> Self {
        Self { shared: 0.5, independent: 0.75_f64.sqrt() }
    }
}

impl IncrementSampler {
    /// A deliberately broken sampler with the two mixing coefficients
    /// swapped. Used to check that the law checks catch a bad sampler.
    #[doc(hidden)]
    pub fn tampered() -> Self {
        let ok = Self::default();
        Self { shared: ok.independent, independent: ok.shared }
    }

    /// Maps a pair of standard normals to `(omega, omega~)`.
    pub fn transform(&self, h: f64, xi1: f64, xi2: f64) -> (f64, f64) {
        let s = h.sqrt();
        (s * xi1, s * (self.shared * xi1 + self.independent * xi2))
    }

    pub fn sample<R: Rng + ?Sized>(&self, h: f64, q: usize, rng: &mut R) -> Result<(DVector<f64>, DVector<f64>)> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!("step size must be positive, got {h}")));
        }
        let mut omega = DVector::zeros(q);
        let mut tilde = DVector::zeros(q);
        for i in 0..q {
            let xi1: f64 = rng.sample(StandardNormal);
            let xi2: f64 = rng.sample(StandardNormal);
            let (w, wt) = self.transform(h, xi1, xi2);
            omega[i] = w;
            tilde[i] = wt;
        }
        Ok((omega, tilde))
    }
}

/// Draws one increment pair with the exact joint law.
pub fn sample_increment_pair<R: Rng + ?Sized>(h: f64, q: usize, rng: &mut R) -> Result<(DVector<f64>, DVector<f64>)> {
    IncrementSampler::default().sample(h, q, rng)
}

/// Increment pairs for every step of a grid. Entry `n` holds
/// `(omega_{n+1}, omega~_{n+1})`, the pair driving step `t_n -> t_{n+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    grid: TimeGrid,
    omega: Vec<DVector<f64>>,
    omega_tilde: Vec<DVector<f64>>,
}

impl NoisePath {
    pub fn sample<R: Rng + ?Sized>(grid: &TimeGrid, q: usize, rng: &mut R) -> Self {
        Self::sample_with(&IncrementSampler::default(), grid, q, rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(sampler: &IncrementSampler, grid: &TimeGrid, q: usize, rng: &mut R) -> Self {
        let h = grid.step_size();
        let (omega, omega_tilde) =
            (0..grid.steps()).map(|_| sampler.sample(h, q, rng).expect("grid step is positive")).unzip();
        Self { grid: *grid, omega, omega_tilde }
    }

    pub fn from_increments(grid: TimeGrid, omega: Vec<DVector<f64>>, omega_tilde: Vec<DVector<f64>>) -> Result<Self> {
        if omega.len() != grid.steps() || omega_tilde.len() != grid.steps() {
            return Err(Error::Config(format!(
                "noise path needs {} increments, got {} and {}",
                grid.steps(),
                omega.len(),
                omega_tilde.len()
            )));
        }
        let q = omega.first().map_or(0, |w| w.len());
        if omega.iter().chain(&omega_tilde).any(|w| w.len() != q) {
            return Err(Error::Config("noise increments have inconsistent dimensions".into()));
        }
        Ok(Self { grid, omega, omega_tilde })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.omega.first().map_or(0, |w| w.len())
    }

    /// `omega_{n+1}`, the Brownian increment over `[t_n, t_{n+1}]`.
    pub fn omega(&self, n: usize) -> &DVector<f64> {
        &self.omega[n]
    }

    /// `omega~_{n+1}`.
    pub fn omega_tilde(&self, n: usize) -> &DVector<f64> {
        &self.omega_tilde[n]
    }
}
