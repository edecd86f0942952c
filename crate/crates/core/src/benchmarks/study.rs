use rayon::prelude::*;

use super::{rmse, Benchmark};
use crate::backward::Scheme;
use crate::error::{Error, Result};
use crate::problem::DriverMode;
use crate::seed::cell_seed;
use crate::stats::loglog_slope;
use crate::trainer::{train, TrainConfig, DEFAULT_OFFSET, DEFAULT_THETA};

/// Desk-scale partition counts (a factor of four in `N`).
pub const DESK_STEPS: [usize; 5] = [10, 14, 20, 28, 40];
/// The larger sweep `N = 20, 30, ..., 70`.
pub const PAPER_STEPS: [usize; 6] = [20, 30, 40, 50, 60, 70];

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub steps: Vec<usize>,
    /// `K = round(c_iter N^3)`.
    pub c_iter: f64,
    pub runs: usize,
    pub theta: f64,
    pub offset: f64,
    pub scheme: Scheme,
    pub driver_mode: Option<DriverMode>,
    pub master_seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            steps: DESK_STEPS.to_vec(),
            c_iter: 0.2,
            runs: 30,
            theta: DEFAULT_THETA,
            offset: DEFAULT_OFFSET,
            scheme: Scheme::HighOrder,
            driver_mode: None,
            master_seed: 0,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::Config("empty N list".into()));
        }
        if self.steps.iter().any(|&n| n < 2) {
            return Err(Error::Config("every N must be at least 2".into()));
        }
        if !self.steps.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("N list must be strictly ascending".into()));
        }
        if self.runs < 2 {
            return Err(Error::Config(format!("runs must be at least 2, got {}", self.runs)));
        }
        if !(self.c_iter > 0.0 && self.c_iter.is_finite()) {
            return Err(Error::Config(format!("c_iter must be positive, got {}", self.c_iter)));
        }
        Ok(())
    }
}

/// `K = round(c N^3)`.
pub fn iterations_for(c_iter: f64, steps: usize) -> usize {
    (c_iter * (steps as f64).powi(3)).round() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub steps: usize,
    pub iterations: usize,
    /// Completed runs.
    pub runs: usize,
    pub aborted: usize,
    /// `sqrt(mean e^2)` over completed runs.
    pub rmse_mean: f64,
    /// Sample standard deviation of the per-run errors.
    pub rmse_std: f64,
    pub errors: Vec<f64>,
}

impl StudyRow {
    pub fn from_errors(steps: usize, iterations: usize, errors: Vec<f64>, aborted: usize) -> Self {
        let n = errors.len();
        let rmse_mean = (errors.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt();
        let mean = errors.iter().sum::<f64>() / n as f64;
        let rmse_std =
            if n > 1 { (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        Self { steps, iterations, runs: n, aborted, rmse_mean, rmse_std, errors }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub benchmark: String,
    pub config: StudyConfig,
    pub rows: Vec<StudyRow>,
    pub slope: f64,
    pub slope_stderr: f64,
}

impl ConvergenceReport {
    pub fn is_strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].rmse_mean < w[0].rmse_mean)
    }
}

/// Least-squares slope of `ln rmse_mean` against `ln N`.
pub fn fit_rows(rows: &[StudyRow]) -> Result<(f64, f64)> {
    let ns: Vec<f64> = rows.iter().map(|r| r.steps as f64).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.rmse_mean).collect();
    let fit = loglog_slope(&ns, &errs)
        .ok_or_else(|| Error::StudyFailed("need two rows with positive errors to fit a slope".into()))?;
    Ok((fit.slope, fit.slope_stderr))
}

/// Trains `runs` independent controls per `N` with `K = round(c N^3)` and
/// fits the log-log RMSE slope. Cells run in parallel; each owns the seed
/// `cell_seed(master, N, run)`, so the report does not depend on
/// scheduling.
pub fn convergence_study(benchmark: &Benchmark, cfg: &StudyConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let cells: Vec<(usize, usize)> = cfg.steps.iter().flat_map(|&n| (0..cfg.runs).map(move |r| (n, r))).collect();

    let outcomes: Vec<Result<f64>> = cells
        .par_iter()
        .map(|&(steps, run)| {
            let grid = benchmark.grid(steps)?;
            let train_cfg = TrainConfig {
                iterations: iterations_for(cfg.c_iter, steps),
                theta: cfg.theta,
                offset: cfg.offset,
                scheme: cfg.scheme,
                driver_mode: cfg.driver_mode,
                seed: cell_seed(cfg.master_seed, steps, run),
                ..TrainConfig::default()
            };
            let result = train(benchmark.problem(), &grid, &train_cfg)?;
            Ok(rmse(&result.control, |t| benchmark.exact_control(t), &grid))
        })
        .collect();

    let mut rows = Vec::with_capacity(cfg.steps.len());
    for (i, &steps) in cfg.steps.iter().enumerate() {
        let chunk = &outcomes[i * cfg.runs..(i + 1) * cfg.runs];
        let mut errors = Vec::with_capacity(cfg.runs);
        let mut aborted = 0;
        let mut first_failure = None;
        for outcome in chunk {
            match outcome {
                Ok(e) => errors.push(*e),
                Err(err @ Error::TrainingAborted { .. }) => {
                    aborted += 1;
                    first_failure.get_or_insert_with(|| err.to_string());
                }
                Err(err) => return Err(Error::StudyFailed(err.to_string())),
            }
        }
        if aborted * 10 > cfg.runs || errors.len() < 2 {
            return Err(Error::StudyFailed(format!(
                "{aborted} of {} runs aborted at N = {steps}: {}",
                cfg.runs,
                first_failure.unwrap_or_default()
            )));
        }
        rows.push(StudyRow::from_errors(steps, iterations_for(cfg.c_iter, steps), errors, aborted));
    }

    let (slope, slope_stderr) = fit_rows(&rows)?;
    Ok(ConvergenceReport { benchmark: benchmark.label().to_owned(), config: cfg.clone(), rows, slope, slope_stderr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::example1_problem;

    fn synthetic(f: impl Fn(f64) -> f64) -> Vec<StudyRow> {
        DESK_STEPS.iter().map(|&n| StudyRow::from_errors(n, iterations_for(0.2, n), vec![f(n as f64); 3], 0)).collect()
    }

    #[test]
    fn synthetic_first_order_rows() {
        let (slope, se) = fit_rows(&synthetic(|n| 1.0 / n)).unwrap();
        assert!((slope + 1.0).abs() < 1e-12);
        assert!(se.abs() < 1e-12);
    }

    #[test]
    fn synthetic_half_order_rows() {
        let (slope, _) = fit_rows(&synthetic(|n| n.powf(-0.5))).unwrap();
        assert!((slope + 0.5).abs() < 1e-12);
    }

    #[test]
    fn row_aggregation() {
        let row = StudyRow::from_errors(10, 200, vec![3.0, 4.0], 0);
        assert!((row.rmse_mean - 12.5f64.sqrt()).abs() < 1e-15);
        assert!((row.rmse_std - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn iteration_budget() {
        assert_eq!(iterations_for(0.2, 50), 25_000);
        assert_eq!(iterations_for(0.2, 14), 549);
    }

    #[test]
    fn config_validation() {
        let ok = StudyConfig::default();
        assert!(ok.validate().is_ok());
        assert!(StudyConfig { runs: 1, ..ok.clone() }.validate().is_err());
        assert!(StudyConfig { steps: vec![20, 10], ..ok.clone() }.validate().is_err());
        assert!(StudyConfig { steps: vec![], ..ok.clone() }.validate().is_err());
        assert!(StudyConfig { c_iter: 0.0, ..ok }.validate().is_err());
    }

    #[test]
    fn small_study_is_schedule_independent() {
        let bench = example1_problem(0.5).unwrap();
        let cfg = StudyConfig { steps: vec![4, 6, 8], runs: 3, c_iter: 0.5, master_seed: 3, ..StudyConfig::default() };
        let a = convergence_study(&bench, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| convergence_study(&bench, &cfg)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 3);
        assert!(a.rows.iter().all(|r| r.runs == 3 && r.rmse_mean > 0.0));
    }
}
