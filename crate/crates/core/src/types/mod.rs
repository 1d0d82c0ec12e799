//! Value types shared by every stage of the deblurring pipeline.
//!
//! [`Image`] holds both the blurred observation and sharp estimates. Its
//! values are only clamped to `[0, 1]` when read from or written to disk, so
//! gradient iterates may temporarily leave the unit interval. [`Kernel`] is a
//! square, odd-sided grid of weights on the probability simplex.

mod io;

use std::fmt;
use std::io::Write;

pub use io::{load_image, load_kernel, save_image, save_image_16bit, save_kernel, save_kernel_png};

use crate::conv::BoundaryMode;
use crate::error::{Error, Result};
use crate::optimizer::StepPolicy;
use crate::tv::TvVariant;

/// Maximum deviation of a kernel's weight sum from one.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Row-major grid of intensities.
#[derive(Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "image data has {} values, expected {}x{}={}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        Ok(Self { width, height, data })
    }

    /// # Panics
    /// Panics when either dimension is zero.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    /// Builds an image from `f(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(width, height)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image::from_raw(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Copy with every intensity clamped to `[0, 1]`.
    pub fn clamped(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &Image) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub(crate) fn check_same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }
}

impl fmt::Debug for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (lo, hi) = self.min_max();
        f.debug_struct("Image")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("range", &(lo, hi))
            .finish()
    }
}

/// Square blur kernel with odd side, constrained to the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    side: usize,
    data: Vec<f64>,
}

impl Kernel {
    /// Validates side, length, non-negativity and unit sum.
    pub fn new(side: usize, data: Vec<f64>) -> Result<Self> {
        check_odd_side(side)?;
        if data.len() != side * side {
            return Err(Error::invalid(format!(
                "kernel of side {side} needs {} weights, got {}",
                side * side,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!(
                "kernel weight {bad} is not a finite non-negative number"
            )));
        }
        let sum: f64 = data.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!("kernel weights sum to {sum}, not 1")));
        }
        Ok(Self { side, data })
    }

    /// Scales non-negative weights so they sum to one.
    pub fn from_weights(side: usize, weights: Vec<f64>) -> Result<Self> {
        check_odd_side(side)?;
        if weights.len() != side * side {
            return Err(Error::invalid(format!(
                "kernel of side {side} needs {} weights, got {}",
                side * side,
                weights.len()
            )));
        }
        if weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("kernel weights must be finite and non-negative"));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::invalid("kernel weights sum to zero"));
        }
        let data = weights.into_iter().map(|v| v / sum).collect();
        Ok(Self { side, data })
    }

    /// All weight on the center tap.
    pub fn delta(side: usize) -> Result<Self> {
        check_odd_side(side)?;
        let mut data = vec![0.0; side * side];
        data[(side / 2) * side + side / 2] = 1.0;
        Ok(Self { side, data })
    }

    pub(crate) fn from_simplex_unchecked(side: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), side * side);
        debug_assert!((data.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        Self { side, data }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of taps `s = side²`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.data
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.data
    }

    /// Weight at row `u`, column `v`.
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[u * self.side + v]
    }

    pub fn min_weight(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_weight(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.data.iter().all(|&v| v > 0.0)
    }
}

/// The initial kernel of the coarsest pyramid level: every tap `1/s`.
pub fn uniform_kernel(side: usize) -> Result<Kernel> {
    check_odd_side(side)?;
    let s = side * side;
    Ok(Kernel {
        side,
        data: vec![1.0 / s as f64; s],
    })
}

pub(crate) fn check_odd_side(side: usize) -> Result<()> {
    if side == 0 || side.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "kernel side must be a positive odd integer, got {side}"
        )));
    }
    Ok(())
}

/// The TV-regularised least-squares objective `‖f∗k − b‖² + λ·TV(f)`.
#[derive(Debug, Clone)]
pub struct Objective {
    pub blurred: Image,
    pub lambda: f64,
    pub tv_variant: TvVariant,
    pub boundary: BoundaryMode,
    /// Smoothing constant that makes the TV term differentiable.
    pub tv_epsilon: f64,
}

impl Objective {
    pub const DEFAULT_TV_EPSILON: f64 = 1e-3;

    pub fn new(blurred: Image, lambda: f64) -> Self {
        Self {
            blurred,
            lambda,
            tv_variant: TvVariant::default(),
            boundary: BoundaryMode::default(),
            tv_epsilon: Self::DEFAULT_TV_EPSILON,
        }
    }

    pub fn with_tv_variant(mut self, variant: TvVariant) -> Self {
        self.tv_variant = variant;
        self
    }

    pub fn with_boundary(mut self, boundary: BoundaryMode) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_tv_epsilon(mut self, eps: f64) -> Self {
        self.tv_epsilon = eps;
        self
    }

    /// Same parameters, different observation (used per pyramid level).
    pub fn with_blurred(&self, blurred: Image) -> Self {
        Self {
            blurred,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.tv_epsilon > 0.0 && self.tv_epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "tv epsilon must be > 0, got {}",
                self.tv_epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    /// Entropic mirror descent on the kernel.
    #[default]
    Prida,
    /// Euclidean projected gradient descent on the kernel.
    Pgd,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Prida => "prida",
            Algorithm::Pgd => "pgd",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "prida" => Ok(Algorithm::Prida),
            "pgd" => Ok(Algorithm::Pgd),
            other => Err(Error::invalid(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LipschitzSetting {
    /// Power-iteration estimate at the start of every solve.
    #[default]
    Auto,
    /// A single user-supplied constant used for both blocks.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Iteration budget `T` (per pyramid level).
    pub max_iters: usize,
    pub step: StepPolicy,
    /// Cap on the multiplicative kernel update.
    pub big_m: f64,
    pub lipschitz: LipschitzSetting,
    /// Stop once `‖p^{t+1} − p^t‖₂` drops below this. `None` means the
    /// scale-aware default `1e-7·√(n+s)`.
    pub tol_move: Option<f64>,
    /// Re-estimate the Lipschitz constants every N iterations.
    pub relip_every: Option<usize>,
    /// Retry with shorter steps when a step increases the objective.
    pub descent_guard: bool,
    /// Keep the image fixed and only update the kernel.
    pub freeze_image: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Prida,
            max_iters: 1000,
            step: StepPolicy::default(),
            big_m: 1000.0,
            lipschitz: LipschitzSetting::Auto,
            tol_move: None,
            relip_every: None,
            descent_guard: true,
            freeze_image: false,
        }
    }
}

impl SolverConfig {
    /// Fixed iteration count, no early stop, no descent guard.
    pub fn benchmark(algorithm: Algorithm, iters: usize) -> Self {
        Self {
            algorithm,
            max_iters: iters,
            tol_move: Some(0.0),
            descent_guard: false,
            ..Self::default()
        }
    }

    pub fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        self
    }

    pub fn with_max_iters(mut self, iters: usize) -> Self {
        self.max_iters = iters;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.step.alpha
    }

    pub fn tol_move_for(&self, n: usize, s: usize) -> f64 {
        self.tol_move.unwrap_or(1e-7 * ((n + s) as f64).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        let alpha = self.step.alpha;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !(self.big_m >= 1.0) {
            return Err(Error::invalid(format!("big-M must be >= 1, got {}", self.big_m)));
        }
        if let LipschitzSetting::Fixed(l) = self.lipschitz {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::invalid(format!("Lipschitz constant must be > 0, got {l}")));
            }
        }
        if let Some(tol) = self.tol_move {
            if !(tol >= 0.0) {
                return Err(Error::invalid(format!("tol_move must be >= 0, got {tol}")));
            }
        }
        if self.relip_every == Some(0) {
            return Err(Error::invalid("relip_every must be positive"));
        }
        self.step.validate()
    }
}

/// One optimizer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    /// Iteration index after the step (1-based).
    pub t: usize,
    /// Objective at the new iterate.
    pub objective: f64,
    pub eta_f: f64,
    pub eta_k_max: f64,
    /// Joint movement `‖p^{t+1} − p^t‖₂` over image and kernel.
    pub move_l2: f64,
    /// `KL(k^{t+1} ‖ k^t)`.
    pub kl_step: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub const CSV_HEADER: &'static str = "t,objective,eta_f,eta_k_max,move_l2,kl_step";

    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "{}\r\n", Self::CSV_HEADER)?;
        for r in &self.records {
            write!(
                out,
                "{},{},{},{},{},{}\r\n",
                r.t, r.objective, r.eta_f, r.eta_k_max, r.move_l2, r.kl_step
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_kernel_sides() {
        let k = uniform_kernel(3).unwrap();
        assert_eq!(k.len(), 9);
        assert!(k.weights().iter().all(|&w| w == 1.0 / 9.0));

        let k = uniform_kernel(1).unwrap();
        assert_eq!(k.weights(), &[1.0]);

        let k = uniform_kernel(5).unwrap();
        assert!(k.weights().iter().all(|&w| w == 0.04));
        assert!((k.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn even_side_is_rejected() {
        assert!(matches!(uniform_kernel(4), Err(Error::InvalidArgument(_))));
        assert!(matches!(uniform_kernel(0), Err(Error::InvalidArgument(_))));
        assert!(Kernel::delta(2).is_err());
    }

    #[test]
    fn kernel_validation() {
        assert!(Kernel::new(1, vec![1.0]).is_ok());
        assert!(Kernel::new(1, vec![0.5]).is_err());
        assert!(Kernel::new(3, vec![1.0 / 9.0; 8]).is_err());
        let mut w = vec![0.0; 9];
        w[0] = 1.5;
        w[1] = -0.5;
        assert!(Kernel::new(3, w).is_err());
        let k = Kernel::from_weights(3, vec![2.0; 9]).unwrap();
        assert!((k.weights().iter().sum::<f64>() - 1.0).abs() < SIMPLEX_TOL);
    }

    #[test]
    fn image_shape_is_checked() {
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::new(0, 2, vec![]).is_err());
        let img = Image::from_fn(3, 2, |x, y| (x + 10 * y) as f64);
        assert_eq!(img.get(2, 1), 12.0);
        assert_eq!(img.dims(), (3, 2));
    }

    #[test]
    fn clamping_only_on_request() {
        let img = Image::new(2, 1, vec![-0.2, 1.3]).unwrap();
        assert_eq!(img.data(), &[-0.2, 1.3]);
        assert_eq!(img.clamped().data(), &[0.0, 1.0]);
    }

    #[test]
    fn solver_config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let mut cfg = SolverConfig::default();
        cfg.step.alpha = 1.0;
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig {
            big_m: 0.5,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn trace_csv_has_header() {
        let mut trace = Trace::new();
        trace.push(TraceRecord {
            t: 1,
            objective: 0.5,
            eta_f: 0.1,
            eta_k_max: 0.2,
            move_l2: 0.01,
            kl_step: 1e-4,
        });
        let csv = trace.to_csv_string();
        assert_eq!(
            csv,
            "t,objective,eta_f,eta_k_max,move_l2,kl_step\r\n1,0.5,0.1,0.2,0.01,0.0001\r\n"
        );
    }
}
