//! The oracle-backed checks run by `validate`, parameterised so the same
//! code drives both the quick smoke run and the full acceptance bands.

use std::fmt;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::backward::{solve_backward, Scheme};
use crate::benchmarks::{example1_problem, linear_test_problem};
use crate::constraint::BoxConstraint;
use crate::control::ControlPath;
use crate::error::Result;
use crate::grid::TimeGrid;
use crate::oracle::{
    finite_difference_gradient, increment_law_check_with, nested_mc_bsde, IncrementLawOptions, NestedConfig,
};
use crate::path::{simulate_forward, IncrementSampler, NoisePath};
use crate::seed::derive;
use crate::stats::Welford;
use crate::trainer::sample_gradient;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag}  {:<28} {}", self.name, self.detail)
    }
}

/// Sizes and bands for one validation sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationConfig {
    pub increment_draws: usize,
    pub increment_bands: f64,
    pub sampler: IncrementSampler,
    pub unbiased_samples: usize,
    pub nested_outer: usize,
    pub nested_inner: usize,
    pub unbiased_bands: f64,
    pub gradient_samples: usize,
    pub gradient_bands: f64,
    pub projection_trials: usize,
    pub seed: u64,
}

impl ValidationConfig {
    pub fn full() -> Self {
        Self {
            increment_draws: 1_000_000,
            increment_bands: 4.0,
            sampler: IncrementSampler::default(),
            unbiased_samples: 1_000_000,
            nested_outer: 10_000,
            nested_inner: 10_000,
            unbiased_bands: 3.0,
            gradient_samples: 100_000,
            gradient_bands: 3.0,
            projection_trials: 10_000,
            seed: 0,
        }
    }

    /// Small sample sizes with 6-SE bands.
    pub fn quick() -> Self {
        Self {
            increment_draws: 10_000,
            increment_bands: 6.0,
            unbiased_samples: 10_000,
            nested_outer: 200,
            nested_inner: 100,
            unbiased_bands: 6.0,
            gradient_samples: 10_000,
            gradient_bands: 6.0,
            projection_trials: 10_000,
            ..Self::full()
        }
    }
}

pub const INCREMENT_STEPS: [f64; 3] = [0.01, 0.1, 1.0];

pub fn run_all(cfg: &ValidationConfig) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for &h in &INCREMENT_STEPS {
        out.push(increment_law(h, cfg)?);
    }
    out.extend(unbiasedness(cfg)?);
    out.extend(gradient_vs_fd(cfg)?);
    out.push(projection(cfg.projection_trials, cfg.seed));
    Ok(out)
}

pub fn increment_law(h: f64, cfg: &ValidationConfig) -> Result<CheckOutcome> {
    let opts = IncrementLawOptions { sampler: cfg.sampler, ..IncrementLawOptions::default() };
    let r = increment_law_check_with(h, cfg.increment_draws, derive(cfg.seed, h.to_bits()), &opts)?;
    let (agree_var, agree_cov) = r.agreement.unwrap_or((f64::NAN, f64::NAN));
    Ok(CheckOutcome::new(
        format!("increment law h={h}"),
        r.passes(cfg.increment_bands),
        format!(
            "Var~={:.6} ({:.2} SE) Cov={:.6} ({:.2} SE) sub-grid gap {:.2}/{:.2} SE",
            r.closed_form.var_tilde.estimate,
            r.closed_form.var_tilde.sigmas(),
            r.closed_form.cov.estimate,
            r.closed_form.cov.sigmas(),
            agree_var,
            agree_cov
        ),
    ))
}

/// Setup of the unbiasedness comparison: linear problem, `N = 2`, `u = 0.3`.
pub const UNBIASED_X0: f64 = 0.5;
pub const UNBIASED_CONTROL: f64 = 0.3;

/// Sample-wise `(Y_0, Z_0)` averaged over independent passes, compared
/// with the nested Monte Carlo conditional-expectation solution.
pub fn unbiasedness(cfg: &ValidationConfig) -> Result<[CheckOutcome; 2]> {
    let spec = linear_test_problem(UNBIASED_X0);
    let grid = TimeGrid::new(1.0, 2)?;
    let u = ControlPath::constant(grid, DVector::from_element(1, UNBIASED_CONTROL));
    let x0 = DVector::from_element(1, UNBIASED_X0);

    let [y, z] = samplewise_initial_adjoint(&spec, &grid, &u, cfg.unbiased_samples, derive(cfg.seed, 0x5a))?;
    let nested = nested_mc_bsde(
        &spec,
        &grid,
        &u,
        &x0,
        &DVector::zeros(0),
        &NestedConfig {
            outer: cfg.nested_outer,
            inner: cfg.nested_inner,
            scheme: Scheme::HighOrder,
            seed: derive(cfg.seed, 0x5b),
        },
    )?;
    let compare = |name: &str, s: &Welford, value: f64, se: f64| {
        let combined = s.std_error().hypot(se);
        let gap = (s.mean() - value).abs();
        CheckOutcome::new(
            name,
            gap <= cfg.unbiased_bands * combined,
            format!("sample-wise {:.6} vs nested {:.6}, gap {:.2} combined SE", s.mean(), value, gap / combined),
        )
    };
    Ok([
        compare("unbiased Y_0", &y, nested.y0.value[0], nested.y0.standard_error[0]),
        compare("unbiased Z_0", &z, nested.z0.value[0], nested.z0.standard_error[0]),
    ])
}

/// Running moments of the scalar `Y_0` and `Z_0` over fresh passes.
pub fn samplewise_initial_adjoint(
    spec: &crate::problem::ProblemSpec,
    grid: &TimeGrid,
    u: &ControlPath,
    samples: usize,
    seed: u64,
) -> Result<[Welford; 2]> {
    const CHUNK: usize = 10_000;
    let parts = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, c as u64));
            let c_ = spec.coefficients();
            let mut acc = [Welford::default(); 2];
            for _ in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let data = c_.sample_data(&mut rng);
                let x0 = c_.sample_x0(&mut rng);
                let noise = NoisePath::sample(grid, spec.dims().noise, &mut rng);
                let fwd = simulate_forward(spec, grid, u, &noise, &x0)?;
                let bwd = solve_backward(Scheme::HighOrder, spec, grid, u, &fwd, &noise, &data)?;
                acc[0].push(bwd.y(0)[0]);
                acc[1].push(bwd.z(0)[(0, 0)]);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut acc = [Welford::default(); 2];
    for p in &parts {
        acc[0].merge(&p[0]);
        acc[1].merge(&p[1]);
    }
    Ok(acc)
}

/// `(node, component)` pairs probed on Example 1 at `u = 0`, `N = 4`.
pub const GRADIENT_PROBES: [(usize, usize); 3] = [(0, 1), (1, 0), (2, 1)];
pub const GRADIENT_STEPS: usize = 4;

/// Mean sample-wise gradient against the finite-difference oracle, within
/// `bands` combined SE plus `2/N` for the discretisation mismatch between
/// the two.
pub fn gradient_vs_fd(cfg: &ValidationConfig) -> Result<Vec<CheckOutcome>> {
    let bench = example1_problem(0.5)?;
    let spec = bench.problem();
    let grid = bench.grid(GRADIENT_STEPS)?;
    let u = ControlPath::zeros(grid, spec.dims().control);

    let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, 0x9a));
    let mut acc = vec![Welford::default(); GRADIENT_PROBES.len()];
    for _ in 0..cfg.gradient_samples {
        let g = sample_gradient(spec, &grid, &u, Scheme::HighOrder, &mut rng)?;
        for (a, &(n, i)) in acc.iter_mut().zip(&GRADIENT_PROBES) {
            a.push(g[n][i]);
        }
    }
    let slack = 2.0 / GRADIENT_STEPS as f64;
    GRADIENT_PROBES
        .iter()
        .zip(&acc)
        .map(|(&(n, i), a)| {
            let fd =
                finite_difference_gradient(spec, &grid, &u, n, i, 1e-3, cfg.gradient_samples, derive(cfg.seed, 0x9b))?;
            let (value, se) = fd.mean_and_se();
            let gap = (a.mean() - value).abs();
            let allowed = cfg.gradient_bands * a.std_error().hypot(se) + slack;
            Ok(CheckOutcome::new(
                format!("gradient vs FD ({n},{i})"),
                gap <= allowed,
                format!("estimate {:.6} vs FD {:.6}, gap {:.4} <= {:.4}", a.mean(), value, gap, allowed),
            ))
        })
        .collect()
}

/// Non-expansiveness and the variational inequality
/// `(v - P v) . (w - P v) <= 0` for `w` in the box, on random triples.
pub fn projection(trials: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, 0x77));
    let mut worst_expansion = f64::NEG_INFINITY;
    let mut worst_inequality = f64::NEG_INFINITY;
    for _ in 0..trials {
        let dim = rng.random_range(1..=4);
        let lo: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..1.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.0..3.0)).collect();
        let bx = BoxConstraint::new(lo, hi).expect("lo <= hi by construction");
        let v = DVector::from_fn(dim, |_, _| rng.random_range(-6.0..6.0));
        let w = DVector::from_fn(dim, |_, _| rng.random_range(-6.0..6.0));
        let (pv, pw) = (bx.project(&v), bx.project(&w));
        worst_expansion = worst_expansion.max((&pv - &pw).norm() - (&v - &w).norm());
        worst_inequality = worst_inequality.max((&v - &pv).dot(&(&pw - &pv)));
    }
    CheckOutcome::new(
        "projection",
        worst_expansion <= 1e-12 && worst_inequality <= 1e-12,
        format!("{trials} triples, worst expansion {worst_expansion:.2e}, worst inequality {worst_inequality:.2e}"),
    )
}
