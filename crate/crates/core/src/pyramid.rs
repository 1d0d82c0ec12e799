//! Coarse-to-fine estimation: solve on a small copy of the problem, then
//! upscale the estimate and refine at the next resolution.

use crate::error::{Error, Result};
use crate::optimizer::solve;
use crate::types::{check_odd_side, uniform_kernel, Image, Kernel, Objective, SolverConfig, Trace};

pub const DEFAULT_SCALE_FACTOR: f64 = std::f64::consts::FRAC_1_SQRT_2;
pub const MIN_KERNEL_SIDE: usize = 3;
/// Floor applied to upscaled kernel taps so PRIDA can start from them.
pub const KERNEL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Level {
    pub width: usize,
    pub height: usize,
    pub kernel_side: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidPlan {
    /// Coarsest first.
    pub levels: Vec<Level>,
    pub scale_factor: f64,
    pub min_kernel_side: usize,
}

impl PyramidPlan {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn kernel_sides(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.kernel_side).collect()
    }

    pub fn finest(&self) -> &Level {
        self.levels.last().expect("plan has at least one level")
    }
}

/// Nearest odd integer to `x`, at least `MIN_KERNEL_SIDE`.
fn nearest_odd(x: f64) -> usize {
    let odd = 2.0 * ((x - 1.0) / 2.0).round() + 1.0;
    (odd.max(MIN_KERNEL_SIDE as f64)) as usize
}

/// Levels for an image of `input_dims = (width, height)` and a kernel of
/// `kernel_side`. Kernel sides shrink by `scale_factor` per level until they
/// reach 3; image dims shrink by the same factor but never below the level's
/// kernel side.
pub fn build_plan(input_dims: (usize, usize), kernel_side: usize, scale_factor: f64) -> Result<PyramidPlan> {
    check_odd_side(kernel_side)?;
    if !(scale_factor > 0.0 && scale_factor < 1.0) {
        return Err(Error::invalid(format!(
            "scale factor must lie in (0, 1), got {scale_factor}"
        )));
    }
    let (w, h) = input_dims;
    if kernel_side > w.min(h) {
        return Err(Error::invalid(format!(
            "kernel side {kernel_side} exceeds image size {w}x{h}"
        )));
    }
    let mut sides = vec![kernel_side];
    let mut cur = kernel_side;
    while cur > MIN_KERNEL_SIDE {
        // always shrink by at least one odd step
        cur = nearest_odd(cur as f64 * scale_factor).min(cur - 2);
        sides.push(cur);
    }
    let levels = sides
        .iter()
        .enumerate()
        .map(|(j, &side)| {
            let scale = scale_factor.powi(j as i32);
            let dim = |d: usize| ((d as f64 * scale).round() as usize).clamp(side, d);
            Level {
                width: dim(w),
                height: dim(h),
                kernel_side: side,
            }
        })
        .rev()
        .collect();
    Ok(PyramidPlan {
        levels,
        scale_factor,
        min_kernel_side: MIN_KERNEL_SIDE,
    })
}

/// Source coordinate of destination sample `dst` when resampling `old` samples
/// onto `new`, pixel centres aligned.
fn source_coord(dst: usize, old: usize, new: usize) -> f64 {
    ((dst as f64 + 0.5) * old as f64 / new as f64 - 0.5).clamp(0.0, (old - 1) as f64)
}

fn bilinear(data: &[f64], w: usize, h: usize, sx: f64, sy: f64) -> f64 {
    let x0 = sx.floor() as usize;
    let y0 = sy.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let (tx, ty) = (sx - x0 as f64, sy - y0 as f64);
    let top = data[y0 * w + x0] * (1.0 - tx) + data[y0 * w + x1] * tx;
    let bottom = data[y1 * w + x0] * (1.0 - tx) + data[y1 * w + x1] * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Bilinear upscaling with pixel centres aligned.
pub fn upscale_image(img: &Image, new_dims: (usize, usize)) -> Result<Image> {
    let (w, h) = img.dims();
    let (nw, nh) = new_dims;
    if nw < w || nh < h {
        return Err(Error::invalid(format!("cannot upscale {w}x{h} to {nw}x{nh}")));
    }
    if (nw, nh) == (w, h) {
        return Ok(img.clone());
    }
    let data = img.data();
    Ok(Image::from_fn(nw, nh, |x, y| {
        bilinear(data, w, h, source_coord(x, w, nw), source_coord(y, h, nh))
    }))
}

/// Bilinear upscaling about the kernel centre, floored and renormalised.
pub fn upscale_kernel(k: &Kernel, new_side: usize) -> Result<Kernel> {
    check_odd_side(new_side)?;
    let side = k.side();
    if new_side < side {
        return Err(Error::invalid(format!(
            "cannot upscale kernel side {side} to {new_side}"
        )));
    }
    if new_side == side {
        return Ok(k.clone());
    }
    let mut taps = Vec::with_capacity(new_side * new_side);
    for v in 0..new_side {
        for u in 0..new_side {
            let value = bilinear(
                k.weights(),
                side,
                side,
                source_coord(u, side, new_side),
                source_coord(v, side, new_side),
            );
            taps.push(value.max(KERNEL_FLOOR));
        }
    }
    Kernel::from_weights(new_side, taps)
}

/// Area-average weights: row `i` lists `(source index, weight)` pairs.
fn area_weights(old: usize, new: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = old as f64 / new as f64;
    (0..new)
        .map(|i| {
            let lo = i as f64 * ratio;
            let hi = (i + 1) as f64 * ratio;
            let mut row = Vec::new();
            let mut j = lo.floor() as usize;
            while (j as f64) < hi && j < old {
                let overlap = (hi.min((j + 1) as f64) - lo.max(j as f64)).max(0.0);
                if overlap > 0.0 {
                    row.push((j, overlap / ratio));
                }
                j += 1;
            }
            row
        })
        .collect()
}

/// Anti-aliased downscaling by area averaging.
pub fn downscale_image(img: &Image, new_dims: (usize, usize)) -> Result<Image> {
    let (w, h) = img.dims();
    let (nw, nh) = new_dims;
    if nw > w || nh > h || nw == 0 || nh == 0 {
        return Err(Error::invalid(format!("cannot downscale {w}x{h} to {nw}x{nh}")));
    }
    if (nw, nh) == (w, h) {
        return Ok(img.clone());
    }
    let wx = area_weights(w, nw);
    let wy = area_weights(h, nh);
    let data = img.data();
    let mut rows = vec![0.0; h * nw];
    for y in 0..h {
        for (x, weights) in wx.iter().enumerate() {
            rows[y * nw + x] = weights.iter().map(|&(j, a)| a * data[y * w + j]).sum();
        }
    }
    Ok(Image::from_fn(nw, nh, |x, y| {
        wy[y].iter().map(|&(j, a)| a * rows[j * nw + x]).sum()
    }))
}

/// Result of a coarse-to-fine solve.
#[derive(Debug, Clone)]
pub struct MultiscaleResult {
    /// Finest-level image, clamped to `[0, 1]`.
    pub image: Image,
    pub kernel: Kernel,
    /// One trace per level, coarsest first.
    pub traces: Vec<Trace>,
    pub plan: PyramidPlan,
}

/// Coarse-to-fine solve with the default scale factor. Each level runs the
/// configured solver for up to `cfg.max_iters` iterations.
pub fn solve_multiscale(obj: &Objective, kernel_side: usize, cfg: &SolverConfig) -> Result<MultiscaleResult> {
    let plan = build_plan(obj.blurred.dims(), kernel_side, DEFAULT_SCALE_FACTOR)?;
    solve_with_plan(obj, &plan, cfg)
}

pub fn solve_with_plan(obj: &Objective, plan: &PyramidPlan, cfg: &SolverConfig) -> Result<MultiscaleResult> {
    let mut traces = Vec::with_capacity(plan.len());
    let (f0, k0) = run_coarse_levels(obj, plan, cfg, &mut traces)?;
    let state = solve(&f0, &k0, obj, cfg)?;
    let (f, k, trace) = state.into_parts();
    traces.push(trace);
    Ok(MultiscaleResult {
        image: f.clamped(),
        kernel: k,
        traces,
        plan: plan.clone(),
    })
}

/// Runs every level except the finest and returns the upsampled iterate the
/// finest level would start from. With a single level this is the blurred
/// image and the uniform kernel.
pub fn finest_level_start(obj: &Objective, plan: &PyramidPlan, cfg: &SolverConfig) -> Result<(Image, Kernel)> {
    run_coarse_levels(obj, plan, cfg, &mut Vec::new())
}

fn run_coarse_levels(
    obj: &Objective,
    plan: &PyramidPlan,
    cfg: &SolverConfig,
    traces: &mut Vec<Trace>,
) -> Result<(Image, Kernel)> {
    obj.validate()?;
    if plan.is_empty() || (plan.finest().width, plan.finest().height) != obj.blurred.dims() {
        return Err(Error::invalid("pyramid plan does not match the blurred image"));
    }
    let mut current: Option<(Image, Kernel)> = None;
    for (i, level) in plan.levels.iter().enumerate() {
        let dims = (level.width, level.height);
        let finest = i + 1 == plan.len();
        let level_blurred = if finest {
            obj.blurred.clone()
        } else {
            downscale_image(&obj.blurred, dims)?
        };
        let (f0, k0) = match current.take() {
            None => (level_blurred.clone(), uniform_kernel(level.kernel_side)?),
            Some((f, k)) => (upscale_image(&f, dims)?, upscale_kernel(&k, level.kernel_side)?),
        };
        if finest {
            return Ok((f0, k0));
        }
        let state = solve(&f0, &k0, &obj.with_blurred(level_blurred), cfg)?;
        let (f, k, trace) = state.into_parts();
        traces.push(trace);
        current = Some((f, k));
    }
    unreachable!("plan is non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_kernel_has_one_level() {
        let plan = build_plan((32, 32), 3, DEFAULT_SCALE_FACTOR).unwrap();
        assert_eq!(plan.kernel_sides(), vec![3]);
        let plan = build_plan((32, 32), 1, DEFAULT_SCALE_FACTOR).unwrap();
        assert_eq!(plan.kernel_sides(), vec![1]);
    }

    #[test]
    fn thirteen_by_hand() {
        // 13/√2 = 9.19 → 9, 9/√2 = 6.36 → 7, 7/√2 = 4.95 → 5, 5/√2 = 3.54 → 3
        let plan = build_plan((64, 64), 13, DEFAULT_SCALE_FACTOR).unwrap();
        assert_eq!(plan.kernel_sides(), vec![3, 5, 7, 9, 13]);
        assert_eq!(
            *plan.finest(),
            Level {
                width: 64,
                height: 64,
                kernel_side: 13
            }
        );
        assert_eq!(plan.levels[0].width, 16);
    }

    #[test]
    fn kernels_fit_every_level() {
        let plan = build_plan((255, 255), 27, DEFAULT_SCALE_FACTOR).unwrap();
        for l in &plan.levels {
            assert!(l.kernel_side % 2 == 1 && l.kernel_side >= 3);
            assert!(l.kernel_side <= l.width.min(l.height));
        }
        assert!(plan.kernel_sides().windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn even_side_is_rejected() {
        assert!(build_plan((32, 32), 8, DEFAULT_SCALE_FACTOR).is_err());
        assert!(upscale_kernel(&uniform_kernel(3).unwrap(), 6).is_err());
    }

    #[test]
    fn constant_images_survive_resampling() {
        let img = Image::filled(7, 5, 0.5);
        let up = upscale_image(&img, (13, 11)).unwrap();
        assert!(up.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let down = downscale_image(&up, (7, 5)).unwrap();
        assert!(down.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let down = downscale_image(&img, (3, 2)).unwrap();
        assert!(down.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn checkerboard_doubling_by_hand() {
        let img = Image::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let up = upscale_image(&img, (4, 4)).unwrap();
        // source coords along each axis: 0, 0.25, 0.75, 1
        let t = [0.0, 0.25, 0.75, 1.0];
        for y in 0..4 {
            for x in 0..4 {
                let (tx, ty) = (t[x], t[y]);
                let expected = tx * (1.0 - ty) + (1.0 - tx) * ty;
                assert!((up.get(x, y) - expected).abs() < 1e-15, "({x},{y})");
            }
        }
    }

    #[test]
    fn same_size_upscale_is_identity() {
        let img = Image::from_fn(5, 4, |x, y| (x * 7 + y) as f64 / 40.0);
        assert_eq!(upscale_image(&img, (5, 4)).unwrap(), img);
        let k = Kernel::from_weights(3, (1..=9).map(f64::from).collect()).unwrap();
        assert_eq!(upscale_kernel(&k, 3).unwrap(), k);
    }

    #[test]
    fn upscaled_delta_stays_centred() {
        let k = upscale_kernel(&Kernel::delta(3).unwrap(), 7).unwrap();
        let sum: f64 = k.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for v in 0..7 {
            for u in 0..7 {
                assert!((k.get(u, v) - k.get(6 - u, v)).abs() < 1e-15);
                assert!((k.get(u, v) - k.get(u, 6 - v)).abs() < 1e-15);
            }
        }
        assert_eq!(k.max_weight(), k.get(3, 3));
    }

    #[test]
    fn uniform_three_to_five() {
        let k = upscale_kernel(&uniform_kernel(3).unwrap(), 5).unwrap();
        // clamped bilinear of a constant is constant: uniform again
        for &w in k.weights() {
            assert!((w - 1.0 / 25.0).abs() < 1e-15);
        }
        assert!(k.min_weight() >= KERNEL_FLOOR);
    }

    #[test]
    fn side_one_solves_a_single_level() {
        let b = Image::from_fn(8, 8, |x, y| ((x + y) % 3) as f64 / 2.0);
        let obj = Objective::new(b, 1e-2);
        let out = solve_multiscale(&obj, 1, &SolverConfig::default().with_max_iters(20)).unwrap();
        assert_eq!(out.traces.len(), 1);
        assert_eq!(out.kernel.weights(), &[1.0]);
    }
}
