//! Blind deconvolution with a TV-regularized least-squares objective.
//!
//! The image takes plain gradient steps; the blur kernel lives on the
//! probability simplex and is updated by exponentiated-gradient (mirror)
//! steps, with a projected-gradient baseline for comparison. A
//! coarse-to-fine pyramid drives the solver on real-sized problems.

// `!(x >= lo)` deliberately rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conv;
pub mod error;
pub mod metrics;
pub mod optimizer;
pub mod pyramid;
pub mod robustness;
pub mod simplex;
pub mod synthetic;
pub mod tv;
pub mod types;

pub use conv::{convolve, BoundaryMode, ConvMethod};
pub use error::{Error, Result};
pub use metrics::{endpoint_error, psnr, EvalReport};
pub use optimizer::{solve, IterateState, LipschitzEstimate, StepMode, StepPolicy};
pub use pyramid::{build_plan, finest_level_start, solve_multiscale, solve_with_plan, MultiscaleResult, PyramidPlan};
pub use tv::TvVariant;
pub use types::{
    load_image, load_kernel, save_image, save_kernel, uniform_kernel, Algorithm, Image, Kernel, LipschitzSetting,
    Objective, SolverConfig, Trace, TraceRecord,
};
