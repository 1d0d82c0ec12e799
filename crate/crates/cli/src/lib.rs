//! Batch front end: deblurring, convergence and noise benchmarks, the
//! kernel-update stability suite and a quick self-test.
//!
//! Exit codes: 0 success, 1 I/O or usage error, 2 numerical failure,
//! 3 property violation.

// `!(x >= lo)` deliberately rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod bench;
mod deblur;
mod output;
mod selftest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use prida::optimizer::{StepMode, StepPolicy};
use prida::{Algorithm, BoundaryMode, LipschitzSetting, Objective, SolverConfig, TvVariant};

pub use bench::{bench_convergence, bench_noise, bench_stability};
pub use deblur::deblur;
pub use selftest::selftest;

/// Environment variable capping the worker threads used by bench commands.
pub const THREADS_ENV: &str = "PRIDA_THREADS";

#[derive(Debug, Clone, Parser)]
#[command(
    name = "prida",
    version,
    about = "Blind deconvolution with entropic mirror descent on the kernel"
)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Recover a sharp image and blur kernel from a blurred image.
    Deblur(DeblurArgs),
    /// Objective traces of PRIDA and PGD from the same finest-level start.
    BenchConvergence(ConvergenceArgs),
    /// Kernel error against pixel-noise level on a synthetic suite.
    BenchNoise(NoiseArgs),
    /// Randomized check of the kernel-update perturbation bound.
    BenchStability(StabilityArgs),
    /// Fast internal consistency checks.
    Selftest(SelftestArgs),
}

/// Optimizer and objective flags shared by every solving command.
#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// TV weight [default: 6e-4, or 2e-4 with `--preset large`].
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value = "prida", value_parser = parse_algorithm)]
    pub algo: Algorithm,
    /// Cap on the multiplicative kernel update.
    #[arg(long = "big-m", default_value_t = 1000.0)]
    pub big_m: f64,
    /// Kernel step shrink factor, in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// `adaptive` (per-coordinate, capped by 1/L) or `fixed`.
    #[arg(long = "step-mode", default_value = "adaptive", value_parser = parse_step_mode)]
    pub step_mode: StepMode,
    /// Step used when --step-mode is fixed.
    #[arg(long = "fixed-eta", default_value_t = 1e-3)]
    pub fixed_eta: f64,
    /// `auto` for power-iteration estimates, or a positive constant.
    #[arg(long, default_value = "auto", value_parser = parse_lipschitz)]
    pub lipschitz: LipschitzSetting,
    /// Iterations per pyramid level.
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    /// Stop a level once the iterate moves less than this (default scales with problem size).
    #[arg(long = "tol-move")]
    pub tol_move: Option<f64>,
    /// Re-estimate Lipschitz constants every N iterations.
    #[arg(long = "relip-every")]
    pub relip_every: Option<usize>,
    /// Accept objective-increasing steps instead of backtracking.
    #[arg(long = "no-descent-guard")]
    pub no_descent_guard: bool,
    /// `isotropic` or `anisotropic`.
    #[arg(long, default_value = "isotropic", value_parser = parse_tv)]
    pub tv: TvVariant,
    /// TV smoothing constant.
    #[arg(long = "tv-eps", default_value_t = Objective::DEFAULT_TV_EPSILON)]
    pub tv_eps: f64,
    /// `circular` or `replicate`.
    #[arg(long, default_value = "circular", value_parser = parse_boundary)]
    pub boundary: BoundaryMode,
    /// Pyramid downscale factor between levels.
    #[arg(long = "scale-factor", default_value_t = prida::pyramid::DEFAULT_SCALE_FACTOR)]
    pub scale_factor: f64,
}

impl SolverArgs {
    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        let cfg = SolverConfig {
            algorithm: self.algo,
            max_iters: self.iters,
            step: StepPolicy {
                mode: self.step_mode,
                alpha: self.alpha,
                fixed_eta: self.fixed_eta,
            },
            big_m: self.big_m,
            lipschitz: self.lipschitz,
            tol_move: self.tol_move,
            relip_every: self.relip_every,
            descent_guard: !self.no_descent_guard,
            freeze_image: false,
        };
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }

    pub fn objective(&self, blurred: prida::Image, default_lambda: f64) -> Result<Objective, CliError> {
        let obj = Objective::new(blurred, self.lambda.unwrap_or(default_lambda))
            .with_tv_variant(self.tv)
            .with_boundary(self.boundary)
            .with_tv_epsilon(self.tv_eps);
        obj.validate().map_err(usage)?;
        if !(self.scale_factor > 0.0 && self.scale_factor < 1.0) {
            return Err(CliError::Usage(format!(
                "--scale-factor must lie in (0, 1), got {}",
                self.scale_factor
            )));
        }
        Ok(obj)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// 27×27 kernel, λ = 6e-4.
    Standard,
    /// Large images: 31×31 kernel, λ = 2e-4.
    Large,
}

#[derive(Debug, Clone, Args)]
pub struct DeblurArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Odd kernel side. Overrides the preset.
    #[arg(long = "kernel-size")]
    pub kernel_size: Option<usize>,
    /// Sets kernel size and λ unless they are given explicitly.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BlurKind {
    /// Seeded linear motion blur.
    Motion,
    /// No blur.
    Delta,
}

/// Synthetic instance set shared by the benchmarks.
#[derive(Debug, Clone, Args)]
pub struct SuiteArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Side of the square synthetic images.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long = "kernel-size", default_value_t = 9)]
    pub kernel_size: usize,
    #[arg(long, value_enum, default_value = "motion")]
    pub blur: BlurKind,
}

#[derive(Debug, Clone, Args)]
pub struct ConvergenceArgs {
    /// Output directory for `convergence.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Blurred image to use instead of a synthetic instance.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub suite: SuiteArgs,
    /// Iterations of each algorithm at the finest level.
    #[arg(long = "bench-iters", default_value_t = 1000)]
    pub bench_iters: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct NoiseArgs {
    /// Output directory for `noise.csv`, `noise_instances.csv` and `noise_timing.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub suite: SuiteArgs,
    #[arg(long, default_value_t = 8)]
    pub instances: usize,
    /// Pixel-noise standard deviations in intensity units (image range [0, 1]).
    #[arg(long, value_delimiter = ',', default_values_t = default_sigmas())]
    pub sigmas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "prida,pgd", value_parser = parse_algorithm)]
    pub algos: Vec<Algorithm>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct StabilityArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    /// Cap on the multiplicative update; `inf` disables it.
    #[arg(long = "big-m", default_value_t = f64::INFINITY)]
    pub big_m: f64,
    /// Multiply the bound by this before comparing. Values below 1 inject faults.
    #[arg(long = "inject-rhs-scale", default_value_t = 1.0)]
    pub rhs_scale: f64,
    /// Directory for the per-trial `stability.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Default TV weight.
pub const DEFAULT_LAMBDA: f64 = 6e-4;

fn default_sigmas() -> Vec<f64> {
    [1.0, 3.0, 5.0, 7.0, 9.0].iter().map(|s| s / 255.0).collect()
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: prida::Error| e.to_string())
}

fn parse_tv(s: &str) -> Result<TvVariant, String> {
    s.parse().map_err(|e: prida::Error| e.to_string())
}

fn parse_boundary(s: &str) -> Result<BoundaryMode, String> {
    s.parse().map_err(|e: prida::Error| e.to_string())
}

fn parse_step_mode(s: &str) -> Result<StepMode, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "adaptive" => Ok(StepMode::Adaptive),
        "fixed" => Ok(StepMode::Fixed),
        other => Err(format!("unknown step mode {other:?}")),
    }
}

fn parse_lipschitz(s: &str) -> Result<LipschitzSetting, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(LipschitzSetting::Auto);
    }
    match s.parse::<f64>() {
        Ok(l) if l > 0.0 && l.is_finite() => Ok(LipschitzSetting::Fixed(l)),
        _ => Err(format!("expected `auto` or a positive number, got {s:?}")),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] prida::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("usage: {0}")]
    Usage(String),
    #[error("property violation: {0}")]
    Violation(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(prida::Error::NumericalFailure { .. }) => 2,
            CliError::Violation(_) => 3,
            _ => 1,
        }
    }
}

fn usage(e: prida::Error) -> CliError {
    match e {
        prida::Error::InvalidArgument(msg) => CliError::Usage(msg),
        other => CliError::Core(other),
    }
}

/// Runs one command, honouring [`THREADS_ENV`] for the worker pool.
pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Some(n),
            _ => {
                return Err(CliError::Usage(format!(
                    "{THREADS_ENV} must be a positive integer, got {v:?}"
                )))
            }
        },
        Err(_) => None,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| match &cfg.command {
        Command::Deblur(args) => deblur(args),
        Command::BenchConvergence(args) => bench_convergence(args),
        Command::BenchNoise(args) => bench_noise(args),
        Command::BenchStability(args) => bench_stability(args),
        Command::Selftest(args) => selftest(args),
    })
}
