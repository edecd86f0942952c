//! Command-line harness: `train`, `converge` and `validate`.
//!
//! Every CSV starts with `#`-prefixed manifest lines recording the full
//! configuration, followed by the data rows. Floats are written with 17
//! significant digits so the files round-trip exactly.

mod csv;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::backward::Scheme;
use crate::benchmarks::{
    convergence_study, example1_problem, example2_problem, iterations_for, rmse, Benchmark, StudyConfig, DESK_STEPS,
    PAPER_STEPS,
};
use crate::error::{Error, Result};
use crate::path::IncrementSampler;
use crate::problem::DriverMode;
use crate::trainer::{train, TrainConfig, DEFAULT_OFFSET, DEFAULT_THETA};
use crate::validation::{run_all, ValidationConfig};

pub use csv::{write_control_csv, write_converge_csv};
pub use manifest::RunManifest;

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "SDE_BACKPROP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "sde-backprop", version, about = "Stochastic optimal control by SGD with high-order adjoint schemes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one control and write control.csv.
    Train(TrainArgs),
    /// Run the RMSE-vs-N study and write converge.csv.
    Converge(ConvergeArgs),
    /// Run the oracle checks and print a pass/fail table.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchmarkKind {
    Example1,
    Example2,
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    #[arg(long, value_enum, default_value = "example1")]
    pub benchmark: BenchmarkKind,
    /// Diffusion scale (defaults: 0.5 for example1, 0.1 for example2).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Initial state (example2 only; default 1).
    #[arg(long)]
    pub x0: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_THETA)]
    pub theta: f64,
    /// Step-size offset in eta_k = theta / (k + M).
    #[arg(long = "M", default_value_t = DEFAULT_OFFSET)]
    pub offset: f64,
    #[arg(long, default_value = "high-order")]
    pub scheme: Scheme,
    /// Driver mode (default: the benchmark's own).
    #[arg(long)]
    pub driver: Option<DriverMode>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long = "N", default_value_t = 50)]
    pub steps: usize,
    /// Iterations (default round(c_iter N^3)).
    #[arg(long = "K")]
    pub iterations: Option<usize>,
    #[arg(long = "c-iter", default_value_t = 0.2)]
    pub c_iter: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long = "N-list", value_delimiter = ',', conflicts_with = "paper_scale")]
    pub steps: Option<Vec<usize>>,
    #[arg(long = "c-iter", default_value_t = 0.2)]
    pub c_iter: f64,
    #[arg(long, default_value_t = 30)]
    pub runs: usize,
    /// Use N = 20, 30, ..., 70.
    #[arg(long)]
    pub paper_scale: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// 10^4 draws per check with 6-SE bands.
    #[arg(long)]
    pub quick: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, hide = true)]
    pub tamper_sampler: bool,
}

impl ProblemArgs {
    pub fn benchmark(&self) -> Result<Benchmark> {
        let bench = match self.benchmark {
            BenchmarkKind::Example1 => {
                if self.x0.is_some_and(|x| x != 0.0) {
                    return Err(Error::Config("example1 starts at x0 = 0; --x0 applies to example2".into()));
                }
                example1_problem(self.sigma())?
            }
            BenchmarkKind::Example2 => example2_problem(self.sigma(), self.x0())?,
        };
        Ok(match self.driver {
            Some(mode) => {
                let problem = bench.problem().clone().with_driver_mode(mode);
                bench.with_problem(problem)
            }
            None => bench,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma.unwrap_or(match self.benchmark {
            BenchmarkKind::Example1 => 0.5,
            BenchmarkKind::Example2 => 0.1,
        })
    }

    pub fn x0(&self) -> f64 {
        self.x0.unwrap_or(match self.benchmark {
            BenchmarkKind::Example1 => 0.0,
            BenchmarkKind::Example2 => 1.0,
        })
    }

    fn record(&self, bench: &Benchmark, m: &mut RunManifest) {
        m.push("benchmark", bench.label());
        m.push("sigma", self.sigma());
        m.push("x0", self.x0());
        m.push("theta", self.theta);
        m.push("M", self.offset);
        m.push("scheme", self.scheme);
        m.push("driver", bench.problem().driver_mode());
        m.push("seed", self.seed);
    }
}

/// Parses `args`, runs the command and returns whether it succeeded; a
/// failed validation is `Ok(false)`.
pub fn run(cli: Cli, argv: &[String]) -> Result<bool> {
    match cli.command {
        Command::Train(a) => cmd_train(&a, argv).map(|_| true),
        Command::Converge(a) => cmd_converge(&a, argv).map(|_| true),
        Command::Validate(a) => cmd_validate(&a),
    }
}

pub fn cmd_train(args: &TrainArgs, argv: &[String]) -> Result<PathBuf> {
    if args.steps < 2 {
        return Err(Error::Config(format!("--N must be at least 2, got {}", args.steps)));
    }
    let p = &args.problem;
    let bench = p.benchmark()?;
    let grid = bench.grid(args.steps)?;
    let iterations = args.iterations.unwrap_or_else(|| iterations_for(args.c_iter, args.steps));
    let cfg = TrainConfig {
        iterations,
        theta: p.theta,
        offset: p.offset,
        scheme: p.scheme,
        seed: p.seed,
        ..TrainConfig::default()
    };
    let result = train(bench.problem(), &grid, &cfg)?;
    let err = rmse(&result.control, |t| bench.exact_control(t), &grid);

    let path = output_path(&p.out, "control.csv")?;
    let mut m = RunManifest::new("train", argv);
    p.record(&bench, &mut m);
    m.push("N", args.steps);
    m.push("K", iterations);
    m.push("output", path.display());
    fs::write(&path, write_control_csv(&m, &bench, &result.control))?;
    println!("rmse {err:.6e}  ->  {}", path.display());
    Ok(path)
}

pub fn cmd_converge(args: &ConvergeArgs, argv: &[String]) -> Result<PathBuf> {
    let p = &args.problem;
    let bench = p.benchmark()?;
    let steps = match (&args.steps, args.paper_scale) {
        (Some(list), _) => list.clone(),
        (None, true) => PAPER_STEPS.to_vec(),
        (None, false) => DESK_STEPS.to_vec(),
    };
    let cfg = StudyConfig {
        steps,
        c_iter: args.c_iter,
        runs: args.runs,
        theta: p.theta,
        offset: p.offset,
        scheme: p.scheme,
        driver_mode: None,
        master_seed: p.seed,
    };
    cfg.validate()?;
    let path = output_path(&p.out, "converge.csv")?;
    let report = convergence_study(&bench, &cfg)?;

    let mut m = RunManifest::new("converge", argv);
    p.record(&bench, &mut m);
    m.push("N_list", cfg.steps.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","));
    m.push("c_iter", cfg.c_iter);
    m.push("runs", cfg.runs);
    m.push("output", path.display());
    fs::write(&path, write_converge_csv(&m, &report))?;
    for row in &report.rows {
        println!("N = {:>3}  K = {:>7}  rmse = {:.6e}", row.steps, row.iterations, row.rmse_mean);
    }
    println!("slope {:.4} +/- {:.4}  ->  {}", report.slope, report.slope_stderr, path.display());
    Ok(path)
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<bool> {
    let mut cfg = if args.quick { ValidationConfig::quick() } else { ValidationConfig::full() };
    cfg.seed = args.seed;
    if args.tamper_sampler {
        cfg.sampler = IncrementSampler::tampered();
    }
    let outcomes = run_all(&cfg)?;
    for o in &outcomes {
        println!("{o}");
    }
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name.as_str()).collect();
    if failed.is_empty() {
        println!("all {} checks passed", outcomes.len());
        Ok(true)
    } else {
        eprintln!("failed: {}", failed.join(", "));
        Ok(false)
    }
}

fn output_path(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.join(name))
}
