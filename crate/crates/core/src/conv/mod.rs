//! "Same"-size 2-D convolution with a centered kernel, its adjoint, and the
//! gradients of the data-fidelity term `‖f∗k − b‖²`.
//!
//! Convolution is `(f∗k)[y,x] = Σ_{u,v} k[u,v]·f[y−(u−c), x−(v−c)]` with
//! `c = side/2`; out-of-range source pixels are resolved by the boundary mode.
//! Gradients carry the factor 2 from the squared norm.
//!
//! Small problems use direct summation and large ones an FFT on a (possibly
//! padded) periodic domain. Both paths perform a fixed sequence of floating
//! point operations, so results are deterministic for given inputs.

mod fft;

use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::types::{Image, Kernel, Objective};
use fft::Fft2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryMode {
    /// Periodic extension; exactly a product of DFTs.
    #[default]
    Circular,
    /// Edge pixels repeat outward.
    Replicate,
}

impl std::str::FromStr for BoundaryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "circular" | "periodic" => Ok(BoundaryMode::Circular),
            "replicate" => Ok(BoundaryMode::Replicate),
            other => Err(Error::invalid(format!("unknown boundary mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvMethod {
    /// FFT when the kernel has at least 49 taps or the image at least 64² pixels.
    #[default]
    Auto,
    Direct,
    Fft,
}

const FFT_MIN_TAPS: usize = 49;
const FFT_MIN_AREA: usize = 64 * 64;

pub fn convolve(f: &Image, k: &Kernel, mode: BoundaryMode) -> Result<Image> {
    convolve_with(f, k, mode, ConvMethod::Auto)
}

pub fn convolve_with(f: &Image, k: &Kernel, mode: BoundaryMode, method: ConvMethod) -> Result<Image> {
    convolve_taps(f, k.weights(), k.side(), mode, method)
}

/// Convolution with arbitrary (not necessarily simplex) weights.
pub fn convolve_taps(f: &Image, taps: &[f64], side: usize, mode: BoundaryMode, method: ConvMethod) -> Result<Image> {
    let engine = ConvEngine::new(f.width(), f.height(), side, mode, method)?;
    check_taps(taps, side)?;
    Ok(Image::from_raw(f.width(), f.height(), engine.convolve(f.data(), taps)))
}

/// Adjoint of `x ↦ convolve(x, k)`: `⟨convolve(f,k), r⟩ = ⟨f, correlate(k,r)⟩`.
pub fn correlate(k: &Kernel, r: &Image, mode: BoundaryMode) -> Result<Image> {
    correlate_taps(k.weights(), k.side(), r, mode, ConvMethod::Auto)
}

pub fn correlate_taps(taps: &[f64], side: usize, r: &Image, mode: BoundaryMode, method: ConvMethod) -> Result<Image> {
    let engine = ConvEngine::new(r.width(), r.height(), side, mode, method)?;
    check_taps(taps, side)?;
    Ok(Image::from_raw(r.width(), r.height(), engine.correlate(taps, r.data())))
}

/// Adjoint of `k ↦ convolve(f, k)`, restricted to a `side × side` support:
/// `out[u,v] = Σ_{y,x} r[y,x]·f[y−(u−c), x−(v−c)]`.
pub fn kernel_correlation(
    f: &Image,
    r: &Image,
    side: usize,
    mode: BoundaryMode,
    method: ConvMethod,
) -> Result<Vec<f64>> {
    f.check_same_dims(r)?;
    let engine = ConvEngine::new(f.width(), f.height(), side, mode, method)?;
    Ok(engine.kernel_correlation(f.data(), r.data()))
}

/// `‖f∗k − b‖²`.
pub fn data_term(f: &Image, k: &Kernel, obj: &Objective) -> Result<f64> {
    let eval = evaluate_data(f, k, obj)?;
    Ok(eval.value)
}

/// `2·correlate(k, f∗k − b)`.
pub fn grad_f_data(f: &Image, k: &Kernel, obj: &Objective) -> Result<Image> {
    let eval = evaluate_data(f, k, obj)?;
    Ok(Image::from_raw(f.width(), f.height(), eval.grad_f))
}

/// `2·kernel_correlation(f, f∗k − b)`.
pub fn grad_k_data(f: &Image, k: &Kernel, obj: &Objective) -> Result<Vec<f64>> {
    Ok(evaluate_data(f, k, obj)?.grad_k)
}

fn evaluate_data(f: &Image, k: &Kernel, obj: &Objective) -> Result<DataEval> {
    obj.blurred.check_same_dims(f)?;
    let engine = ConvEngine::new(f.width(), f.height(), k.side(), obj.boundary, ConvMethod::Auto)?;
    Ok(engine.evaluate(f.data(), k.weights(), obj.blurred.data()))
}

fn check_taps(taps: &[f64], side: usize) -> Result<()> {
    if taps.len() != side * side {
        return Err(Error::invalid(format!(
            "kernel of side {side} needs {} taps, got {}",
            side * side,
            taps.len()
        )));
    }
    Ok(())
}

/// Data-term value, residual and gradients at one point.
#[derive(Debug, Clone)]
pub(crate) struct DataEval {
    pub value: f64,
    pub residual: Vec<f64>,
    pub grad_f: Vec<f64>,
    pub grad_k: Vec<f64>,
}

/// Convolution operators for a fixed image size, kernel side and boundary
/// mode. FFT plans and index tables are built once.
pub(crate) struct ConvEngine {
    width: usize,
    height: usize,
    side: usize,
    path: Path,
}

enum Path {
    Direct {
        /// `rows[u][y]` is the source row of output row `y` for kernel row `u`.
        rows: Vec<Vec<usize>>,
        cols: Vec<Vec<usize>>,
    },
    Fft(FftDomain),
}

/// Periodic domain of `(height + 2·pad) × (width + 2·pad)`. Replicate mode
/// pads by the kernel radius so the periodic wrap never reaches real data.
struct FftDomain {
    pad: usize,
    dw: usize,
    dh: usize,
    fft: Fft2,
    /// `clamp(Y − pad)` for each domain row / column.
    row_src: Vec<usize>,
    col_src: Vec<usize>,
    width: usize,
}

impl ConvEngine {
    pub(crate) fn new(
        width: usize,
        height: usize,
        side: usize,
        mode: BoundaryMode,
        method: ConvMethod,
    ) -> Result<Self> {
        crate::types::check_odd_side(side)?;
        if side > width.min(height) {
            return Err(Error::invalid(format!(
                "kernel side {side} exceeds image size {width}x{height}"
            )));
        }
        let use_fft = match method {
            ConvMethod::Direct => false,
            ConvMethod::Fft => true,
            ConvMethod::Auto => side * side >= FFT_MIN_TAPS || width * height >= FFT_MIN_AREA,
        };
        let c = (side / 2) as isize;
        let path = if use_fft {
            let pad = match mode {
                BoundaryMode::Circular => 0,
                BoundaryMode::Replicate => side / 2,
            };
            let (dw, dh) = (width + 2 * pad, height + 2 * pad);
            let clamp = |n: usize, len: usize| -> Vec<usize> {
                (0..n)
                    .map(|i| (i as isize - pad as isize).clamp(0, len as isize - 1) as usize)
                    .collect()
            };
            Path::Fft(FftDomain {
                pad,
                dw,
                dh,
                fft: Fft2::new(dh, dw),
                row_src: clamp(dh, height),
                col_src: clamp(dw, width),
                width,
            })
        } else {
            let table = |len: usize| -> Vec<Vec<usize>> {
                (0..side as isize)
                    .map(|u| {
                        let d = u - c;
                        (0..len as isize).map(|i| source_index(i - d, len, mode)).collect()
                    })
                    .collect()
            };
            Path::Direct {
                rows: table(height),
                cols: table(width),
            }
        };
        Ok(Self {
            width,
            height,
            side,
            path,
        })
    }

    pub(crate) fn convolve(&self, f: &[f64], taps: &[f64]) -> Vec<f64> {
        match &self.path {
            Path::Direct { rows, cols } => {
                let (w, s) = (self.width, self.side);
                let mut out = vec![0.0; f.len()];
                for y in 0..self.height {
                    for x in 0..w {
                        let mut acc = 0.0;
                        for u in 0..s {
                            let row = rows[u][y] * w;
                            for v in 0..s {
                                acc += taps[u * s + v] * f[row + cols[v][x]];
                            }
                        }
                        out[y * w + x] = acc;
                    }
                }
                out
            }
            Path::Fft(dom) => {
                let fh = dom.fft.forward_real(&dom.extend(f));
                let kh = dom.fft.forward_real(&dom.embed_taps(taps, self.side));
                let q = dom.fft.inverse_real(mul(&fh, &kh, false));
                dom.crop(&q, self.width, self.height)
            }
        }
    }

    pub(crate) fn correlate(&self, taps: &[f64], r: &[f64]) -> Vec<f64> {
        match &self.path {
            Path::Direct { rows, cols } => {
                let (w, s) = (self.width, self.side);
                let mut out = vec![0.0; r.len()];
                for y in 0..self.height {
                    for x in 0..w {
                        let ry = r[y * w + x];
                        for u in 0..s {
                            let row = rows[u][y] * w;
                            for v in 0..s {
                                out[row + cols[v][x]] += taps[u * s + v] * ry;
                            }
                        }
                    }
                }
                out
            }
            Path::Fft(dom) => {
                let rh = dom.fft.forward_real(&dom.embed_image(r, self.width, self.height));
                let kh = dom.fft.forward_real(&dom.embed_taps(taps, self.side));
                let s = dom.fft.inverse_real(mul(&rh, &kh, true));
                dom.fold(&s, self.width, self.height)
            }
        }
    }

    pub(crate) fn kernel_correlation(&self, f: &[f64], r: &[f64]) -> Vec<f64> {
        match &self.path {
            Path::Direct { rows, cols } => {
                let (w, s) = (self.width, self.side);
                let mut out = vec![0.0; s * s];
                for u in 0..s {
                    for v in 0..s {
                        let mut acc = 0.0;
                        for y in 0..self.height {
                            let row = rows[u][y] * w;
                            for x in 0..w {
                                acc += r[y * w + x] * f[row + cols[v][x]];
                            }
                        }
                        out[u * s + v] = acc;
                    }
                }
                out
            }
            Path::Fft(dom) => {
                let fh = dom.fft.forward_real(&dom.extend(f));
                let rh = dom.fft.forward_real(&dom.embed_image(r, self.width, self.height));
                let c = dom.fft.inverse_real(mul(&rh, &fh, true));
                dom.extract_taps(&c, self.side)
            }
        }
    }

    pub(crate) fn evaluate(&self, f: &[f64], taps: &[f64], b: &[f64]) -> DataEval {
        match &self.path {
            Path::Direct { .. } => {
                let mut residual = self.convolve(f, taps);
                residual.iter_mut().zip(b).for_each(|(q, bv)| *q -= bv);
                let mut grad_f = self.correlate(taps, &residual);
                grad_f.iter_mut().for_each(|g| *g *= 2.0);
                let mut grad_k = self.kernel_correlation(f, &residual);
                grad_k.iter_mut().for_each(|g| *g *= 2.0);
                DataEval {
                    value: residual.iter().map(|r| r * r).sum(),
                    residual,
                    grad_f,
                    grad_k,
                }
            }
            Path::Fft(dom) => {
                // shares the image and kernel spectra between all three products
                let fh = dom.fft.forward_real(&dom.extend(f));
                let kh = dom.fft.forward_real(&dom.embed_taps(taps, self.side));
                let q = dom.fft.inverse_real(mul(&fh, &kh, false));
                let mut residual = dom.crop(&q, self.width, self.height);
                residual.iter_mut().zip(b).for_each(|(q, bv)| *q -= bv);
                let rh = dom
                    .fft
                    .forward_real(&dom.embed_image(&residual, self.width, self.height));
                let gf = dom.fft.inverse_real(mul(&rh, &kh, true));
                let mut grad_f = dom.fold(&gf, self.width, self.height);
                grad_f.iter_mut().for_each(|g| *g *= 2.0);
                let gk = dom.fft.inverse_real(mul(&rh, &fh, true));
                let mut grad_k = dom.extract_taps(&gk, self.side);
                grad_k.iter_mut().for_each(|g| *g *= 2.0);
                DataEval {
                    value: residual.iter().map(|r| r * r).sum(),
                    residual,
                    grad_f,
                    grad_k,
                }
            }
        }
    }
}

fn source_index(i: isize, len: usize, mode: BoundaryMode) -> usize {
    let len = len as isize;
    match mode {
        BoundaryMode::Circular => i.rem_euclid(len) as usize,
        BoundaryMode::Replicate => i.clamp(0, len - 1) as usize,
    }
}

/// Pointwise `a·b` or `a·conj(b)`.
fn mul(a: &[Complex<f64>], b: &[Complex<f64>], conj_b: bool) -> Vec<Complex<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| if conj_b { x * y.conj() } else { x * y })
        .collect()
}

impl FftDomain {
    fn extend(&self, f: &[f64]) -> Vec<f64> {
        let width = self.width;
        let mut out = Vec::with_capacity(self.dw * self.dh);
        for &sy in &self.row_src {
            let row = sy * width;
            out.extend(self.col_src.iter().map(|&sx| f[row + sx]));
        }
        out
    }

    fn embed_image(&self, r: &[f64], width: usize, height: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dw * self.dh];
        for y in 0..height {
            let dst = (y + self.pad) * self.dw + self.pad;
            out[dst..dst + width].copy_from_slice(&r[y * width..(y + 1) * width]);
        }
        out
    }

    /// Kernel offset `(u−c, v−c)` lands at index `(u−c mod dh, v−c mod dw)`.
    fn embed_taps(&self, taps: &[f64], side: usize) -> Vec<f64> {
        let c = (side / 2) as isize;
        let mut out = vec![0.0; self.dw * self.dh];
        for u in 0..side {
            let y = (u as isize - c).rem_euclid(self.dh as isize) as usize;
            for v in 0..side {
                let x = (v as isize - c).rem_euclid(self.dw as isize) as usize;
                out[y * self.dw + x] = taps[u * side + v];
            }
        }
        out
    }

    fn extract_taps(&self, grid: &[f64], side: usize) -> Vec<f64> {
        let c = (side / 2) as isize;
        let mut out = vec![0.0; side * side];
        for u in 0..side {
            let y = (u as isize - c).rem_euclid(self.dh as isize) as usize;
            for v in 0..side {
                let x = (v as isize - c).rem_euclid(self.dw as isize) as usize;
                out[u * side + v] = grid[y * self.dw + x];
            }
        }
        out
    }

    fn crop(&self, grid: &[f64], width: usize, height: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(width * height);
        for y in 0..height {
            let src = (y + self.pad) * self.dw + self.pad;
            out.extend_from_slice(&grid[src..src + width]);
        }
        out
    }

    /// Adjoint of `extend`: every domain cell adds into its source pixel.
    fn fold(&self, grid: &[f64], width: usize, height: usize) -> Vec<f64> {
        if self.pad == 0 {
            return grid.to_vec();
        }
        let mut out = vec![0.0; width * height];
        for (yy, &sy) in self.row_src.iter().enumerate() {
            for (xx, &sx) in self.col_src.iter().enumerate() {
                out[sy * width + sx] += grid[yy * self.dw + xx];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |_, _| rng.random::<f64>())
    }

    fn random_kernel(rng: &mut ChaCha8Rng, side: usize) -> Kernel {
        Kernel::from_weights(side, (0..side * side).map(|_| rng.random::<f64>() + 0.01).collect()).unwrap()
    }

    /// Straight double loop over the definition, independent of the engine.
    fn oracle_convolve(f: &Image, k: &Kernel, mode: BoundaryMode) -> Vec<f64> {
        let (w, h) = f.dims();
        let c = (k.side() / 2) as isize;
        let mut out = vec![0.0; w * h];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut acc = 0.0;
                for u in 0..k.side() as isize {
                    for v in 0..k.side() as isize {
                        let sy = source_index(y - (u - c), h, mode);
                        let sx = source_index(x - (v - c), w, mode);
                        acc += k.get(u as usize, v as usize) * f.get(sx, sy);
                    }
                }
                out[(y as usize) * w + x as usize] = acc;
            }
        }
        out
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn identity_kernel_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_image(&mut rng, 6, 5);
        let delta = Kernel::delta(1).unwrap();
        for mode in [BoundaryMode::Circular, BoundaryMode::Replicate] {
            for method in [ConvMethod::Direct, ConvMethod::Fft] {
                let out = convolve_with(&f, &delta, mode, method).unwrap();
                assert!(max_abs_diff(out.data(), f.data()) < 1e-15);
            }
        }
        let delta3 = Kernel::delta(3).unwrap();
        assert_eq!(convolve(&f, &delta3, BoundaryMode::Circular).unwrap(), f);
    }

    #[test]
    fn constant_image_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = Image::filled(8, 7, 0.5);
        let k = random_kernel(&mut rng, 5);
        for method in [ConvMethod::Direct, ConvMethod::Fft] {
            let out = convolve_with(&f, &k, BoundaryMode::Circular, method).unwrap();
            assert!(out.data().iter().all(|v| (v - 0.5).abs() < 1e-14));
        }
    }

    #[test]
    fn matches_direct_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_image(&mut rng, 4, 4);
        let k = random_kernel(&mut rng, 3);
        let out = convolve(&f, &k, BoundaryMode::Circular).unwrap();
        assert!(max_abs_diff(out.data(), &oracle_convolve(&f, &k, BoundaryMode::Circular)) < 1e-12);
    }

    #[test]
    fn fft_agrees_with_direct_up_to_16() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (w, h, side) in [(4, 4, 3), (9, 6, 5), (16, 16, 7), (13, 16, 9), (16, 11, 1)] {
            let f = random_image(&mut rng, w, h);
            let k = random_kernel(&mut rng, side);
            for mode in [BoundaryMode::Circular, BoundaryMode::Replicate] {
                let oracle = oracle_convolve(&f, &k, mode);
                let d = convolve_with(&f, &k, mode, ConvMethod::Direct).unwrap();
                let q = convolve_with(&f, &k, mode, ConvMethod::Fft).unwrap();
                assert!(max_abs_diff(d.data(), &oracle) < 1e-12);
                assert!(max_abs_diff(q.data(), &oracle) < 1e-10, "{w}x{h} side {side} {mode:?}");
            }
        }
    }

    #[test]
    fn adjoint_consistency_both_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (w, h, side) in [(5, 4, 3), (8, 8, 5), (12, 9, 7)] {
            let f = random_image(&mut rng, w, h);
            let r = Image::from_fn(w, h, |_, _| rng.random::<f64>() - 0.5);
            let taps: Vec<f64> = (0..side * side).map(|_| rng.random::<f64>() - 0.3).collect();
            for mode in [BoundaryMode::Circular, BoundaryMode::Replicate] {
                for method in [ConvMethod::Direct, ConvMethod::Fft] {
                    let kf = convolve_taps(&f, &taps, side, mode, method).unwrap();
                    let lhs = kf.dot(&r);
                    let rhs = f.dot(&correlate_taps(&taps, side, &r, mode, method).unwrap());
                    assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "{mode:?} {method:?}");

                    let kc = kernel_correlation(&f, &r, side, mode, method).unwrap();
                    let rhs_k: f64 = kc.iter().zip(&taps).map(|(a, b)| a * b).sum();
                    assert!((lhs - rhs_k).abs() <= 1e-10 * lhs.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn bilinear_in_image_and_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (w, h, side) = (7, 6, 3);
        let f1 = random_image(&mut rng, w, h);
        let f2 = random_image(&mut rng, w, h);
        let t1: Vec<f64> = (0..9).map(|_| rng.random()).collect();
        let t2: Vec<f64> = (0..9).map(|_| rng.random()).collect();
        let (a, b) = (0.7, -1.3);
        let conv = |f: &Image, t: &[f64]| {
            convolve_taps(f, t, side, BoundaryMode::Replicate, ConvMethod::Direct)
                .unwrap()
                .into_data()
        };
        let mix = Image::from_raw(
            w,
            h,
            f1.data().iter().zip(f2.data()).map(|(x, y)| a * x + b * y).collect(),
        );
        let lhs = conv(&mix, &t1);
        let rhs: Vec<f64> = conv(&f1, &t1)
            .iter()
            .zip(conv(&f2, &t1))
            .map(|(x, y)| a * x + b * y)
            .collect();
        assert!(max_abs_diff(&lhs, &rhs) < 1e-12);

        let tmix: Vec<f64> = t1.iter().zip(&t2).map(|(x, y)| a * x + b * y).collect();
        let lhs = conv(&f1, &tmix);
        let rhs: Vec<f64> = conv(&f1, &t1)
            .iter()
            .zip(conv(&f1, &t2))
            .map(|(x, y)| a * x + b * y)
            .collect();
        assert!(max_abs_diff(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        let f = Image::zeros(4, 6);
        let k = crate::types::uniform_kernel(5).unwrap();
        assert!(matches!(
            convolve(&f, &k, BoundaryMode::Circular),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn data_term_zero_at_exact_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = random_image(&mut rng, 6, 6);
        let k = random_kernel(&mut rng, 3);
        let b = convolve(&f, &k, BoundaryMode::Circular).unwrap();
        let obj = Objective::new(b, 0.0);
        assert!(data_term(&f, &k, &obj).unwrap() < 1e-28);
        assert!(grad_f_data(&f, &k, &obj)
            .unwrap()
            .data()
            .iter()
            .all(|g| g.abs() < 1e-13));
        assert!(grad_k_data(&f, &k, &obj).unwrap().iter().all(|g| g.abs() < 1e-13));

        let obj = Objective::new(f.clone(), 0.0);
        assert_eq!(data_term(&f, &Kernel::delta(1).unwrap(), &obj).unwrap(), 0.0);
    }

    #[test]
    fn data_term_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = random_image(&mut rng, 4, 4);
        let k = random_kernel(&mut rng, 3);
        let b = random_image(&mut rng, 4, 4);
        let oracle: f64 = oracle_convolve(&f, &k, BoundaryMode::Circular)
            .iter()
            .zip(b.data())
            .map(|(q, b)| (q - b) * (q - b))
            .sum();
        let obj = Objective::new(b, 0.0);
        assert!((data_term(&f, &k, &obj).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn identity_kernel_gradient_is_twice_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_image(&mut rng, 5, 5);
        let b = random_image(&mut rng, 5, 5);
        let g = grad_f_data(&f, &Kernel::delta(1).unwrap(), &Objective::new(b.clone(), 0.0)).unwrap();
        for ((gv, fv), bv) in g.data().iter().zip(f.data()).zip(b.data()) {
            assert!((gv - 2.0 * (fv - bv)).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_image_gives_equal_kernel_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let f = Image::filled(6, 6, 0.3);
        let k = random_kernel(&mut rng, 3);
        let b = random_image(&mut rng, 6, 6);
        let g = grad_k_data(&f, &k, &Objective::new(b, 0.0)).unwrap();
        assert!(g.iter().all(|v| (v - g[0]).abs() < 1e-12));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let f = Image::zeros(4, 4);
        let obj = Objective::new(Image::zeros(5, 4), 0.0);
        let k = Kernel::delta(1).unwrap();
        assert!(matches!(data_term(&f, &k, &obj), Err(Error::DimensionMismatch { .. })));
    }
}
