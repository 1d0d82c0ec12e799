//! PRIDA and the projected-gradient baseline.
//!
//! Both methods take a plain gradient step on the image. They differ in the
//! kernel update: PRIDA multiplies each tap by `min(exp(−η_{k_i} g_i), M)`
//! and renormalises, PGD steps along `−g` and projects onto the simplex.
//!
//! Step sizes come from block curvature bounds of the objective, estimated
//! by power iteration once per solve (see [`LipschitzEstimate`]).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conv::{ConvEngine, ConvMethod};
use crate::error::{Error, Result};
use crate::simplex::{entropic_step, is_in_simplex, kl, project_simplex};
use crate::tv::{tv_curvature_bound, tv_value_and_grad};
use crate::types::{Algorithm, Image, Kernel, LipschitzSetting, Objective, SolverConfig, Trace, TraceRecord};

const POWER_ITERATIONS: usize = 30;
const POWER_SEED: u64 = 0x005e_ed1f;
/// Halvings tried by the descent guard before giving up on a step.
const GUARD_ATTEMPTS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepMode {
    /// `η_f = 1/L_f`, `η_{k_i} = min(α‖k‖∞ / (k_i‖g_k‖∞), 1/L_k)`.
    #[default]
    Adaptive,
    /// The same constant step for every coordinate.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPolicy {
    pub mode: StepMode,
    pub alpha: f64,
    pub fixed_eta: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            mode: StepMode::Adaptive,
            alpha: 0.5,
            fixed_eta: 1e-3,
        }
    }
}

impl StepPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.mode == StepMode::Fixed && !(self.fixed_eta > 0.0 && self.fixed_eta.is_finite()) {
            return Err(Error::invalid(format!(
                "fixed step must be > 0, got {}",
                self.fixed_eta
            )));
        }
        Ok(())
    }
}

/// Curvature bounds of `𝓛` at a point, split by block.
///
/// Kernel directions are restricted to the simplex tangent space `Σdk = 0`,
/// the only directions the iterates can move in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate {
    /// `2·‖AᵀA‖`, with `A x = x∗k`.
    pub image_block: f64,
    /// `λ·8/ε`, the curvature bound of the TV term.
    pub tv: f64,
    /// `2·‖BᵀB‖` on the tangent space, with `B x = f∗x`.
    pub kernel_block: f64,
    /// `2·‖R‖`, where `R dk = corr(dk, f∗k − b)` is the residual part of
    /// the mixed second derivative.
    pub coupling: f64,
    /// Set when the image is frozen: only the kernel block matters.
    pub kernel_only: bool,
}

impl LipschitzEstimate {
    /// Fixed constant used for both blocks.
    pub fn uniform(l: f64) -> Self {
        Self {
            image_block: l / 2.0,
            tv: 0.0,
            kernel_block: l / 2.0,
            coupling: 0.0,
            kernel_only: false,
        }
    }

    /// Upper bound `L̂` on the Hessian norm along feasible directions.
    pub fn value(&self) -> f64 {
        if self.kernel_only {
            return self.kernel_block;
        }
        self.image_curvature().max(2.0 * self.kernel_block) + self.coupling
    }

    fn image_curvature(&self) -> f64 {
        2.0 * self.image_block + self.tv
    }

    /// Block constants `(L_f, L_k)` with
    /// `dᵀ∇²𝓛 d ≤ L_f‖df‖² + L_k‖dk‖²` for every feasible direction.
    /// The mixed term is split with the weight that balances the two blocks.
    pub fn step_constants(&self) -> (f64, f64) {
        let floor = f64::EPSILON;
        let (kernel, coupling) = (self.kernel_block, self.coupling);
        if self.kernel_only {
            return (f64::INFINITY, kernel.max(floor));
        }
        let c = if coupling > 0.0 {
            (self.image_curvature().max(floor) / (2.0 * kernel).max(floor))
                .sqrt()
                .clamp(1e-8, 1e8)
        } else {
            1.0
        };
        let lf = self.image_curvature() + c * coupling;
        let lk = 2.0 * kernel + coupling / c;
        (lf.max(floor), lk.max(floor))
    }
}

/// `𝓛(f, k) = ‖f∗k − b‖² + λ·TV(f)`.
pub fn objective_value(f: &Image, k: &Kernel, obj: &Objective) -> Result<f64> {
    obj.validate()?;
    obj.blurred.check_same_dims(f)?;
    let model = Model::new(obj, k.side())?;
    Ok(model.evaluate(f.data(), k.weights()).objective)
}

/// Block curvature bounds at `(f, k)` by 30 power-iteration steps per block
/// from a fixed-seed start vector.
pub fn estimate_lipschitz(f: &Image, k: &Kernel, obj: &Objective) -> Result<LipschitzEstimate> {
    obj.validate()?;
    obj.blurred.check_same_dims(f)?;
    let model = Model::new(obj, k.side())?;
    let eval = model.evaluate(f.data(), k.weights());
    Ok(model.lipschitz(f.data(), k.weights(), &eval.residual, false))
}

/// Optimizer state at iteration `t`. Gradients at the current point are
/// cached so consecutive steps evaluate the objective once per iteration.
#[derive(Debug, Clone)]
pub struct IterateState {
    f: Image,
    k: Kernel,
    t: usize,
    objective: f64,
    trace: Trace,
    lipschitz: Option<LipschitzEstimate>,
    cache: Option<Arc<Evaluation>>,
}

impl IterateState {
    pub fn new(f: Image, k: Kernel, obj: &Objective) -> Result<Self> {
        let objective = objective_value(&f, &k, obj)?;
        Ok(Self {
            f,
            k,
            t: 0,
            objective,
            trace: Trace::new(),
            lipschitz: None,
            cache: None,
        })
    }

    pub fn f(&self) -> &Image {
        &self.f
    }

    pub fn k(&self) -> &Kernel {
        &self.k
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn lipschitz(&self) -> Option<&LipschitzEstimate> {
        self.lipschitz.as_ref()
    }

    /// Pins the curvature estimate used by subsequent steps.
    pub fn with_lipschitz(mut self, est: LipschitzEstimate) -> Self {
        self.lipschitz = Some(est);
        self
    }

    pub fn into_parts(self) -> (Image, Kernel, Trace) {
        (self.f, self.k, self.trace)
    }
}

/// One PRIDA iteration.
pub fn prida_step(state: IterateState, obj: &Objective, cfg: &SolverConfig) -> Result<IterateState> {
    let cfg = SolverConfig {
        algorithm: Algorithm::Prida,
        ..cfg.clone()
    };
    single_step(state, obj, &cfg)
}

/// One projected-gradient iteration.
pub fn pgd_step(state: IterateState, obj: &Objective, cfg: &SolverConfig) -> Result<IterateState> {
    let cfg = SolverConfig {
        algorithm: Algorithm::Pgd,
        ..cfg.clone()
    };
    single_step(state, obj, &cfg)
}

fn single_step(state: IterateState, obj: &Objective, cfg: &SolverConfig) -> Result<IterateState> {
    cfg.validate()?;
    obj.validate()?;
    let stepper = Stepper::new(obj, cfg, &state.f, &state.k)?;
    stepper.step(state)
}

/// Runs PRIDA or PGD from `(f0, k0)` until `max_iters` steps have been taken
/// or the iterate moves less than the tolerance.
pub fn solve(f0: &Image, k0: &Kernel, obj: &Objective, cfg: &SolverConfig) -> Result<IterateState> {
    cfg.validate()?;
    obj.validate()?;
    if !is_in_simplex(k0.weights()) {
        return Err(Error::invalid("initial kernel is not on the simplex"));
    }
    if cfg.algorithm == Algorithm::Prida && !k0.is_strictly_positive() {
        return Err(Error::invalid("PRIDA needs a strictly positive initial kernel"));
    }
    let mut state = IterateState::new(f0.clone(), k0.clone(), obj)?;
    if cfg.max_iters == 0 {
        return Ok(state);
    }
    let stepper = Stepper::new(obj, cfg, f0, k0)?;
    let tol = cfg.tol_move_for(f0.len(), k0.len());
    while state.t < cfg.max_iters {
        let stale = match cfg.relip_every {
            Some(n) => state.t % n == 0,
            None => state.lipschitz.is_none(),
        };
        if stale {
            let est = stepper.lipschitz_for(&state);
            state.lipschitz = Some(est);
        }
        state = stepper.step(state)?;
        if state.trace.last().is_some_and(|r| r.move_l2 < tol) {
            break;
        }
    }
    Ok(state)
}

/// PRIDA's kernel update for a given gradient: per-coordinate steps from the
/// step rule, then the capped exponentiated-gradient step. Returns the new
/// kernel weights and the largest step used.
pub fn prida_kernel_update(
    k: &[f64],
    g: &[f64],
    kernel_lipschitz: f64,
    alpha: f64,
    big_m: f64,
) -> Result<(Vec<f64>, f64)> {
    let eta = adaptive_kernel_steps(k, g, kernel_lipschitz, alpha, 1.0);
    let eta_max = eta.iter().copied().fold(0.0, f64::max);
    Ok((entropic_step(k, g, &eta, big_m)?, eta_max))
}

/// PGD's kernel update: `Π_Δ(k − g/L_k)`.
pub fn pgd_kernel_update(k: &[f64], g: &[f64], kernel_lipschitz: f64) -> Vec<f64> {
    let eta = 1.0 / kernel_lipschitz;
    let moved: Vec<f64> = k.iter().zip(g).map(|(ki, gi)| ki - eta * gi).collect();
    project_simplex(&moved)
}

fn adaptive_kernel_steps(k: &[f64], g: &[f64], lk: f64, alpha: f64, scale: f64) -> Vec<f64> {
    let cap = scale / lk;
    let g_inf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if g_inf == 0.0 {
        return vec![cap; k.len()];
    }
    let k_inf = k.iter().copied().fold(0.0f64, f64::max);
    k.iter()
        .map(|&ki| {
            let adaptive = alpha * k_inf / (ki * g_inf);
            (scale * adaptive).min(cap)
        })
        .collect()
}

/// Objective value and gradient at one point.
#[derive(Debug, Clone)]
struct Evaluation {
    objective: f64,
    residual: Vec<f64>,
    grad_f: Vec<f64>,
    grad_k: Vec<f64>,
}

/// The objective bound to a fixed image size and kernel side.
struct Model<'a> {
    obj: &'a Objective,
    engine: ConvEngine,
}

impl<'a> Model<'a> {
    fn new(obj: &'a Objective, side: usize) -> Result<Self> {
        let b = &obj.blurred;
        let engine = ConvEngine::new(b.width(), b.height(), side, obj.boundary, ConvMethod::Auto)?;
        Ok(Self { obj, engine })
    }

    fn evaluate(&self, f: &[f64], k: &[f64]) -> Evaluation {
        let data = self.engine.evaluate(f, k, self.obj.blurred.data());
        let mut grad_f = data.grad_f;
        let mut objective = data.value;
        if self.obj.lambda > 0.0 {
            let (w, h) = self.obj.blurred.dims();
            let (tv, tv_grad) = tv_value_and_grad(f, w, h, self.obj.tv_variant, self.obj.tv_epsilon);
            objective += self.obj.lambda * tv;
            for (g, t) in grad_f.iter_mut().zip(tv_grad) {
                *g += self.obj.lambda * t;
            }
        }
        Evaluation {
            objective,
            residual: data.residual,
            grad_f,
            grad_k: data.grad_k,
        }
    }

    fn lipschitz(&self, f: &[f64], k: &[f64], residual: &[f64], kernel_only: bool) -> LipschitzEstimate {
        let n = f.len();
        let s = k.len();
        let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);

        let (image_block, tv) = if kernel_only {
            (0.0, 0.0)
        } else {
            let a = power_iteration(
                n,
                &mut rng,
                |x| self.engine.correlate(k, &self.engine.convolve(x, k)),
                false,
            );
            (2.0 * a, self.obj.lambda * tv_curvature_bound(self.obj.tv_epsilon))
        };
        let b = power_iteration(
            s,
            &mut rng,
            |x| self.engine.kernel_correlation(f, &self.engine.convolve(f, x)),
            true,
        );
        let coupling = if kernel_only {
            0.0
        } else {
            let rr = power_iteration(
                s,
                &mut rng,
                |x| {
                    self.engine
                        .kernel_correlation(&self.engine.correlate(x, residual), residual)
                },
                true,
            );
            2.0 * rr.sqrt()
        };
        LipschitzEstimate {
            image_block,
            tv,
            kernel_block: 2.0 * b,
            coupling,
            kernel_only,
        }
    }
}

/// Largest eigenvalue of a symmetric PSD operator. With `tangent`, the
/// operator is restricted to sum-zero vectors.
fn power_iteration(dim: usize, rng: &mut ChaCha8Rng, op: impl Fn(&[f64]) -> Vec<f64>, tangent: bool) -> f64 {
    if dim == 0 || (tangent && dim == 1) {
        return 0.0;
    }
    let center = |v: &mut Vec<f64>| {
        if tangent {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.iter_mut().for_each(|x| *x -= mean);
        }
    };
    let normalize = |v: &mut Vec<f64>| -> f64 {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        norm
    };
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
    center(&mut v);
    if normalize(&mut v) == 0.0 {
        return 0.0;
    }
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let mut w = op(&v);
        center(&mut w);
        lambda = normalize(&mut w);
        if lambda == 0.0 {
            return 0.0;
        }
        v = w;
    }
    lambda
}

struct Stepper<'a> {
    model: Model<'a>,
    cfg: &'a SolverConfig,
}

struct Proposal {
    f: Vec<f64>,
    k: Vec<f64>,
    eta_f: f64,
    eta_k_max: f64,
}

impl<'a> Stepper<'a> {
    fn new(obj: &'a Objective, cfg: &'a SolverConfig, f: &Image, k: &Kernel) -> Result<Self> {
        obj.blurred.check_same_dims(f)?;
        Ok(Self {
            model: Model::new(obj, k.side())?,
            cfg,
        })
    }

    fn evaluation(&self, state: &IterateState) -> Arc<Evaluation> {
        match &state.cache {
            Some(e) => Arc::clone(e),
            None => Arc::new(self.model.evaluate(state.f.data(), state.k.weights())),
        }
    }

    fn lipschitz_for(&self, state: &IterateState) -> LipschitzEstimate {
        match self.cfg.lipschitz {
            LipschitzSetting::Fixed(l) => LipschitzEstimate::uniform(l),
            LipschitzSetting::Auto => {
                let eval = self.evaluation(state);
                self.model
                    .lipschitz(state.f.data(), state.k.weights(), &eval.residual, self.cfg.freeze_image)
            }
        }
    }

    fn step(&self, mut state: IterateState) -> Result<IterateState> {
        let eval = self.evaluation(&state);
        let lip = match state.lipschitz {
            Some(l) => l,
            None => {
                let l = self.lipschitz_for(&state);
                state.lipschitz = Some(l);
                l
            }
        };

        let mut proposal = self.propose(&state, &eval, &lip, 1.0, false)?;
        let mut next = self.model.evaluate(&proposal.f, &proposal.k);
        self.check_finite(&state, next.objective)?;

        let increased = |value: f64| value > state.objective + 1e-12 * state.objective.abs().max(1.0);
        if self.cfg.descent_guard && increased(next.objective) {
            let fresh = self.lipschitz_for(&state);
            let mut accepted = false;
            let mut scale = 1.0;
            for _ in 0..GUARD_ATTEMPTS {
                proposal = self.propose(&state, &eval, &fresh, scale, true)?;
                next = self.model.evaluate(&proposal.f, &proposal.k);
                self.check_finite(&state, next.objective)?;
                if !increased(next.objective) {
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                // numerically stationary: stay put
                proposal = Proposal {
                    f: state.f.data().to_vec(),
                    k: state.k.weights().to_vec(),
                    eta_f: 0.0,
                    eta_k_max: 0.0,
                };
                next = (*eval).clone();
            }
        }

        let move_sq: f64 = proposal
            .f
            .iter()
            .zip(state.f.data())
            .chain(proposal.k.iter().zip(state.k.weights()))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let kl_step = kl(&proposal.k, state.k.weights());
        let t = state.t + 1;
        state.trace.push(TraceRecord {
            t,
            objective: next.objective,
            eta_f: proposal.eta_f,
            eta_k_max: proposal.eta_k_max,
            move_l2: move_sq.sqrt(),
            kl_step,
        });
        let (w, h) = state.f.dims();
        let side = state.k.side();
        Ok(IterateState {
            f: Image::from_raw(w, h, proposal.f),
            k: Kernel::from_simplex_unchecked(side, proposal.k),
            t,
            objective: next.objective,
            trace: state.trace,
            lipschitz: state.lipschitz,
            cache: Some(Arc::new(next)),
        })
    }

    fn check_finite(&self, state: &IterateState, value: f64) -> Result<()> {
        if value.is_finite() {
            return Ok(());
        }
        Err(Error::NumericalFailure {
            iteration: state.t + 1,
            message: format!("objective became {value}"),
            trace: Box::new(state.trace.clone()),
        })
    }

    /// Candidate next iterate. `scale` shrinks every step; `uniform_kernel`
    /// replaces the per-coordinate kernel rule by the plain `1/L_k` step.
    fn propose(
        &self,
        state: &IterateState,
        eval: &Evaluation,
        lip: &LipschitzEstimate,
        scale: f64,
        uniform_kernel: bool,
    ) -> Result<Proposal> {
        let policy = &self.cfg.step;
        let (lf, lk) = lip.step_constants();
        let k = state.k.weights();
        let s = k.len();

        let eta_f = if self.cfg.freeze_image {
            0.0
        } else {
            match policy.mode {
                crate::optimizer::StepMode::Adaptive => scale / lf,
                crate::optimizer::StepMode::Fixed => scale * policy.fixed_eta,
            }
        };
        let f: Vec<f64> = state
            .f
            .data()
            .iter()
            .zip(&eval.grad_f)
            .map(|(fv, g)| fv - eta_f * g)
            .collect();

        let (k_new, eta_k_max) = match (self.cfg.algorithm, policy.mode) {
            (Algorithm::Prida, StepMode::Adaptive) => {
                let eta = if uniform_kernel {
                    vec![scale / lk; s]
                } else {
                    adaptive_kernel_steps(k, &eval.grad_k, lk, policy.alpha, scale)
                };
                let eta_max = eta.iter().copied().fold(0.0, f64::max);
                (entropic_step(k, &eval.grad_k, &eta, self.cfg.big_m)?, eta_max)
            }
            (Algorithm::Prida, StepMode::Fixed) => {
                let eta = scale * policy.fixed_eta;
                (entropic_step(k, &eval.grad_k, &vec![eta; s], self.cfg.big_m)?, eta)
            }
            (Algorithm::Pgd, mode) => {
                let eta = match mode {
                    StepMode::Adaptive => scale / lk,
                    StepMode::Fixed => scale * policy.fixed_eta,
                };
                let moved: Vec<f64> = k.iter().zip(&eval.grad_k).map(|(ki, gi)| ki - eta * gi).collect();
                (project_simplex(&moved), eta)
            }
        };
        Ok(Proposal {
            f,
            k: k_new,
            eta_f,
            eta_k_max,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::{convolve, BoundaryMode};
    use crate::types::uniform_kernel;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |_, _| rng.random::<f64>())
    }

    fn random_kernel(rng: &mut ChaCha8Rng, side: usize) -> Kernel {
        Kernel::from_weights(side, (0..side * side).map(|_| rng.random::<f64>() + 0.05).collect()).unwrap()
    }

    /// 8×8 blurred instance with a uniform-kernel start.
    fn small_instance(seed: u64) -> (Image, Kernel, Objective) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = random_image(&mut rng, 8, 8);
        let k_true = random_kernel(&mut rng, 3);
        let b = convolve(&truth, &k_true, BoundaryMode::Circular).unwrap();
        let obj = Objective::new(b.clone(), 1e-3);
        (b, uniform_kernel(3).unwrap(), obj)
    }

    #[test]
    fn identity_kernel_image_block_is_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_image(&mut rng, 8, 8);
        let b = random_image(&mut rng, 8, 8);
        let est = estimate_lipschitz(&f, &Kernel::delta(1).unwrap(), &Objective::new(b, 0.0)).unwrap();
        assert!((est.image_block - 2.0).abs() <= 0.1, "{est:?}");
        // a single tap cannot move on the simplex
        assert_eq!(est.kernel_block, 0.0);
    }

    #[test]
    fn zero_image_has_no_kernel_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = random_image(&mut rng, 8, 8);
        let k = random_kernel(&mut rng, 3);
        let obj = Objective::new(b, 0.0);
        let est = estimate_lipschitz(&Image::zeros(8, 8), &k, &obj).unwrap();
        assert_eq!(est.kernel_block, 0.0);
        let mut rng2 = ChaCha8Rng::seed_from_u64(POWER_SEED);
        let model = Model::new(&obj, 3).unwrap();
        let f_only = power_iteration(
            64,
            &mut rng2,
            |x| {
                model
                    .engine
                    .correlate(k.weights(), &model.engine.convolve(x, k.weights()))
            },
            false,
        );
        assert_eq!(est.image_block, 2.0 * f_only);
    }

    #[test]
    fn estimate_dominates_directional_curvature() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_image(&mut rng, 8, 8);
        let k = random_kernel(&mut rng, 3);
        let obj = Objective::new(random_image(&mut rng, 8, 8), 2e-3);
        let lhat = estimate_lipschitz(&f, &k, &obj).unwrap().value();
        let h = 1e-4;
        let at = |t: f64, df: &[f64], dk: &[f64]| {
            let fi = Image::from_raw(8, 8, f.data().iter().zip(df).map(|(a, b)| a + t * b).collect());
            let ki = Kernel::from_simplex_unchecked(3, k.weights().iter().zip(dk).map(|(a, b)| a + t * b).collect());
            objective_value(&fi, &ki, &obj).unwrap()
        };
        for _ in 0..100 {
            let mut df: Vec<f64> = (0..64).map(|_| rng.random::<f64>() - 0.5).collect();
            let mut dk: Vec<f64> = (0..9).map(|_| rng.random::<f64>() - 0.5).collect();
            let mean = dk.iter().sum::<f64>() / 9.0;
            dk.iter_mut().for_each(|v| *v -= mean);
            let norm = df.iter().chain(&dk).map(|v| v * v).sum::<f64>().sqrt();
            df.iter_mut().chain(dk.iter_mut()).for_each(|v| *v /= norm);
            let curv = (at(h, &df, &dk) - 2.0 * at(0.0, &df, &dk) + at(-h, &df, &dk)) / (h * h);
            assert!(lhat >= curv, "L̂ {lhat} < curvature {curv}");
        }
    }

    #[test]
    fn fixed_point_steps_only_advance_t() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth = random_image(&mut rng, 6, 6);
        let k = random_kernel(&mut rng, 3);
        let b = convolve(&truth, &k, BoundaryMode::Circular).unwrap();
        let obj = Objective::new(b, 0.0);
        for algo in [Algorithm::Prida, Algorithm::Pgd] {
            let cfg = SolverConfig::default().with_algorithm(algo);
            let state = IterateState::new(truth.clone(), k.clone(), &obj).unwrap();
            let next = single_step(state, &obj, &cfg).unwrap();
            assert_eq!(next.t(), 1);
            let df = next
                .f()
                .data()
                .iter()
                .zip(truth.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let dk = next
                .k()
                .weights()
                .iter()
                .zip(k.weights())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(df < 1e-14 && dk < 1e-14, "{algo:?}: {df} {dk}");
        }
    }

    #[test]
    fn pgd_zero_kernel_gradient_keeps_kernel() {
        let k = [0.2, 0.3, 0.5];
        assert_eq!(pgd_kernel_update(&k, &[0.0; 3], 10.0), k.to_vec());
    }

    #[test]
    fn pgd_truncates_to_exact_zero() {
        let out = pgd_kernel_update(&[0.5, 0.25, 0.25], &[0.0, 0.0, 10.0], 1.0);
        assert_eq!(out[2], 0.0);
        assert!(is_in_simplex(&out));
    }

    #[test]
    fn max_iters_zero_returns_initial_state() {
        let (f, k, obj) = small_instance(5);
        let cfg = SolverConfig::default().with_max_iters(0);
        let state = solve(&f, &k, &obj, &cfg).unwrap();
        assert_eq!(state.t(), 0);
        assert!(state.trace().is_empty());
        assert_eq!(state.objective(), objective_value(&f, &k, &obj).unwrap());
    }

    #[test]
    fn adaptive_steps_are_monotone_on_small_instance() {
        for algo in [Algorithm::Prida, Algorithm::Pgd] {
            let (f, k, obj) = small_instance(6);
            let cfg = SolverConfig::benchmark(algo, 20);
            let state = solve(&f, &k, &obj, &cfg).unwrap();
            let objs = state.trace().objectives();
            assert_eq!(objs.len(), 20);
            let mut prev = objective_value(&f, &k, &obj).unwrap();
            for o in objs {
                assert!(o <= prev + 1e-8, "{algo:?}: {o} > {prev}");
                prev = o;
            }
        }
    }

    #[test]
    fn prida_kernel_stays_strictly_positive() {
        let (f, k, obj) = small_instance(7);
        let mut state = IterateState::new(f, k, &obj).unwrap();
        let cfg = SolverConfig::benchmark(Algorithm::Prida, 1);
        for _ in 0..200 {
            state = prida_step(state, &obj, &cfg).unwrap();
            assert!(state.k().is_strictly_positive());
            assert!(is_in_simplex(state.k().weights()));
        }
        assert_eq!(state.t(), 200);
        assert_eq!(state.trace().len(), 200);
    }

    #[test]
    fn movement_is_summable() {
        let (f, k, obj) = small_instance(8);
        let cfg = SolverConfig::benchmark(Algorithm::Prida, 300);
        let start = objective_value(&f, &k, &obj).unwrap();
        let state = solve(&f, &k, &obj, &cfg).unwrap();
        // Each block step decreases the objective by at least L/2 times its
        // squared movement, so the squared movements sum to at most
        // 2·(total decrease)/min(L_f, L_k).
        let (lf, lk) = state.lipschitz().unwrap().step_constants();
        let best = state.trace().objectives().into_iter().fold(start, f64::min);
        let total: f64 = state.trace().records().iter().map(|r| r.move_l2 * r.move_l2).sum();
        let bound = 2.0 * (start - best) / lf.min(lk);
        assert!(total <= bound + 1e-12, "{total} > {bound}");
    }

    #[test]
    fn stops_on_small_movement() {
        let (f, k, obj) = small_instance(9);
        let cfg = SolverConfig {
            tol_move: Some(1e3),
            ..SolverConfig::default()
        };
        let state = solve(&f, &k, &obj, &cfg).unwrap();
        assert_eq!(state.t(), 1);
    }

    #[test]
    fn prida_rejects_kernel_with_zero_tap() {
        let (f, _, obj) = small_instance(10);
        let k = Kernel::delta(3).unwrap();
        assert!(solve(&f, &k, &obj, &SolverConfig::default()).is_err());
        let pgd = SolverConfig::default().with_algorithm(Algorithm::Pgd).with_max_iters(3);
        assert!(solve(&f, &k, &obj, &pgd).is_ok());
    }

    #[test]
    fn non_finite_objective_is_a_numerical_failure() {
        let (f, k, obj) = small_instance(11);
        let cfg = SolverConfig {
            lipschitz: LipschitzSetting::Fixed(1e-300),
            descent_guard: false,
            ..SolverConfig::default()
        };
        match solve(&f, &k, &obj, &cfg) {
            Err(Error::NumericalFailure { iteration, trace, .. }) => {
                assert!(iteration >= 1);
                assert_eq!(trace.len(), iteration - 1);
            }
            other => panic!("expected numerical failure, got {other:?}"),
        }
    }

    #[test]
    fn descent_guard_rescues_oversized_steps() {
        let (f, k, obj) = small_instance(12);
        let cfg = SolverConfig {
            lipschitz: LipschitzSetting::Fixed(1e-2),
            descent_guard: true,
            max_iters: 10,
            tol_move: Some(0.0),
            ..SolverConfig::default()
        };
        let state = solve(&f, &k, &obj, &cfg).unwrap();
        let mut prev = objective_value(&f, &k, &obj).unwrap();
        for o in state.trace().objectives() {
            assert!(o <= prev + 1e-12 * prev.abs().max(1.0));
            prev = o;
        }
    }

    #[test]
    fn trace_tail_matches_state_objective() {
        let (f, k, obj) = small_instance(13);
        let state = solve(&f, &k, &obj, &SolverConfig::benchmark(Algorithm::Prida, 15)).unwrap();
        let recomputed = objective_value(state.f(), state.k(), &obj).unwrap();
        assert!((state.objective() - recomputed).abs() <= 1e-12 * recomputed.max(1.0));
        assert_eq!(state.trace().last().unwrap().objective, state.objective());
    }
}
