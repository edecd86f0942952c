use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::path::IncrementSampler;
use crate::seed::derive;
use crate::stats::Welford;

/// Default resolution of the literal stochastic-integral construction.
pub const SUB_GRID_POINTS: usize = 1000;

const CHUNK: usize = 10_000;

/// One empirical moment against its exact value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    pub estimate: f64,
    pub expected: f64,
    pub std_error: f64,
}

impl Deviation {
    /// Distance from the exact value in standard errors.
    pub fn sigmas(&self) -> f64 {
        let gap = (self.estimate - self.expected).abs();
        if gap == 0.0 {
            0.0
        } else {
            gap / self.std_error
        }
    }

    fn from(acc: &Welford, expected: f64) -> Self {
        Self { estimate: acc.mean(), expected, std_error: acc.std_error() }
    }
}

/// Moments of `(omega, omega~)`. Second moments are taken about the known
/// zero mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentCheck {
    pub mean_omega: Deviation,
    pub mean_tilde: Deviation,
    pub var_omega: Deviation,
    pub var_tilde: Deviation,
    pub cov: Deviation,
}

impl MomentCheck {
    pub fn worst_sigmas(&self) -> f64 {
        [self.mean_omega, self.mean_tilde, self.var_omega, self.var_tilde, self.cov]
            .iter()
            .map(Deviation::sigmas)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementLawOptions {
    pub sampler: IncrementSampler,
    pub sub_grid_points: usize,
}

impl Default for IncrementLawOptions {
    fn default() -> Self {
        Self { sampler: IncrementSampler::default(), sub_grid_points: SUB_GRID_POINTS }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncrementLawReport {
    pub h: f64,
    pub draws: usize,
    pub closed_form: MomentCheck,
    /// `None` when the sub-grid is too coarse to define the integral.
    pub sub_grid: Option<MomentCheck>,
    /// Combined-SE distance between the two constructions for
    /// `(Var omega~, Cov)`.
    pub agreement: Option<(f64, f64)>,
}

impl IncrementLawReport {
    pub fn invalid_sub_grid(&self) -> bool {
        self.sub_grid.is_none()
    }

    /// Every moment within `bands` standard errors of its exact value, and
    /// the two constructions within `bands` combined standard errors.
    pub fn passes(&self, bands: f64) -> bool {
        let own = self.closed_form.worst_sigmas() <= bands;
        let sub = self.sub_grid.is_none_or(|m| m.worst_sigmas() <= bands);
        let agree = self.agreement.is_none_or(|(v, c)| v <= bands && c <= bands);
        own && sub && agree
    }
}

pub fn increment_law_check(h: f64, draws: usize, seed: u64) -> Result<IncrementLawReport> {
    increment_law_check_with(h, draws, seed, &IncrementLawOptions::default())
}

/// Checks the closed-form sampler against `Var = h`, `Cov = h/2`, and
/// against a literal construction `dW~ = 2 dW - (3/h) int (r - t_n) dW_r`
/// on a midpoint sub-grid.
pub fn increment_law_check_with(
    h: f64,
    draws: usize,
    seed: u64,
    opts: &IncrementLawOptions,
) -> Result<IncrementLawReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidGrid(format!("step size must be positive, got {h}")));
    }
    if draws < 2 {
        return Err(Error::Config("increment law check needs at least two draws".into()));
    }
    let sampler = opts.sampler;
    let closed_form = moments(h, draws, derive(seed, 0), |rng| {
        sampler.transform(h, rng.sample(StandardNormal), rng.sample(StandardNormal))
    });

    let points = opts.sub_grid_points;
    let sub_grid = (points >= 2).then(|| {
        let dt = h / points as f64;
        let sd = dt.sqrt();
        moments(h, draws, derive(seed, 1), move |rng| {
            let (mut w, mut integral) = (0.0, 0.0);
            for k in 0..points {
                let dw: f64 = sd * rng.sample::<f64, _>(StandardNormal);
                w += dw;
                integral += (k as f64 + 0.5) * dt * dw;
            }
            (w, 2.0 * w - 3.0 / h * integral)
        })
    });
    let agreement = sub_grid.map(|s| (gap(closed_form.var_tilde, s.var_tilde), gap(closed_form.cov, s.cov)));
    Ok(IncrementLawReport { h, draws, closed_form, sub_grid, agreement })
}

fn gap(a: Deviation, b: Deviation) -> f64 {
    let d = (a.estimate - b.estimate).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.std_error.hypot(b.std_error)
    }
}

fn moments<F>(h: f64, draws: usize, seed: u64, draw: F) -> MomentCheck
where
    F: Fn(&mut ChaCha8Rng) -> (f64, f64) + Sync,
{
    let chunks = draws.div_ceil(CHUNK);
    let parts: Vec<[Welford; 5]> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, c as u64));
            let mut acc = [Welford::default(); 5];
            for _ in c * CHUNK..((c + 1) * CHUNK).min(draws) {
                let (w, wt) = draw(&mut rng);
                for (a, v) in acc.iter_mut().zip([w, wt, w * w, wt * wt, w * wt]) {
                    a.push(v);
                }
            }
            acc
        })
        .collect();
    let mut acc = [Welford::default(); 5];
    for part in &parts {
        for (a, p) in acc.iter_mut().zip(part) {
            a.merge(p);
        }
    }
    MomentCheck {
        mean_omega: Deviation::from(&acc[0], 0.0),
        mean_tilde: Deviation::from(&acc[1], 0.0),
        var_omega: Deviation::from(&acc[2], h),
        var_tilde: Deviation::from(&acc[3], h),
        cov: Deviation::from(&acc[4], h / 2.0),
    }
}
