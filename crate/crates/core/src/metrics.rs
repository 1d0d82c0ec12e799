//! Recovery quality measures.

use crate::error::{Error, Result};
use crate::types::{Image, Kernel, Trace};

/// PSNR reported for identical images.
pub const PSNR_IDENTICAL: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub endpoint_error: f64,
    pub psnr_db: f64,
    pub objective_final: f64,
    pub iters_total: usize,
}

impl EvalReport {
    pub fn new(k_rec: &Kernel, k_true: &Kernel, f_rec: &Image, f_true: &Image, traces: &[Trace]) -> Result<Self> {
        Ok(Self {
            endpoint_error: endpoint_error(k_rec, k_true),
            psnr_db: psnr(f_rec, f_true)?,
            objective_final: traces.last().and_then(|t| t.last()).map_or(f64::NAN, |r| r.objective),
            iters_total: traces.iter().map(Trace::len).sum(),
        })
    }
}

/// Kernel error after the best integer alignment.
///
/// Both kernels are zero-padded to a common side `S`; the error is the
/// smallest mean squared difference over all relative shifts (zero fill, no
/// wrap-around), averaged over the `S²` taps.
pub fn endpoint_error(a: &Kernel, b: &Kernel) -> f64 {
    let side = a.side().max(b.side());
    let pa = pad_centered(a, side);
    let pb = pad_centered(b, side);
    let energy: f64 = pa.iter().chain(&pb).map(|v| v * v).sum();
    let r = side as isize - 1;
    let mut best_corr = f64::NEG_INFINITY;
    for dy in -r..=r {
        for dx in -r..=r {
            best_corr = best_corr.max(shifted_dot(&pa, &pb, side, dx, dy));
        }
    }
    ((energy - 2.0 * best_corr) / (side * side) as f64).max(0.0)
}

fn pad_centered(k: &Kernel, side: usize) -> Vec<f64> {
    let off = (side - k.side()) / 2;
    let mut out = vec![0.0; side * side];
    for (row, taps) in k.weights().chunks(k.side()).enumerate() {
        let start = (row + off) * side + off;
        out[start..start + k.side()].copy_from_slice(taps);
    }
    out
}

/// `Σ a[p] · b[p − (dx, dy)]` over overlapping taps.
fn shifted_dot(a: &[f64], b: &[f64], side: usize, dx: isize, dy: isize) -> f64 {
    let n = side as isize;
    let mut acc = 0.0;
    for y in 0..n {
        let sy = y - dy;
        if !(0..n).contains(&sy) {
            continue;
        }
        for x in 0..n {
            let sx = x - dx;
            if (0..n).contains(&sx) {
                acc += a[(y * n + x) as usize] * b[(sy * n + sx) as usize];
            }
        }
    }
    acc
}

/// `10·log10(1 / MSE)` for images in `[0, 1]`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: b.dims(),
            actual: a.dims(),
        });
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_IDENTICAL);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::uniform_kernel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_kernels_have_zero_error() {
        let k = Kernel::from_weights(3, (1..=9).map(f64::from).collect()).unwrap();
        assert_eq!(endpoint_error(&k, &k), 0.0);
    }

    #[test]
    fn shifted_kernel_is_aligned() {
        let mut w = vec![0.0; 25];
        w[12] = 0.6;
        w[13] = 0.4;
        let a = Kernel::new(5, w).unwrap();
        let mut w = vec![0.0; 25];
        w[6] = 0.6;
        w[7] = 0.4;
        let b = Kernel::new(5, w).unwrap();
        assert!(endpoint_error(&a, &b) < 1e-15);
    }

    #[test]
    fn delta_against_uniform_three() {
        let e = endpoint_error(&Kernel::delta(3).unwrap(), &uniform_kernel(3).unwrap());
        assert!((e - (1.0 / 9.0) * (8.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn symmetric_and_padded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Kernel::from_weights(5, (0..25).map(|_| rng.random()).collect()).unwrap();
        let b = Kernel::from_weights(3, (0..9).map(|_| rng.random()).collect()).unwrap();
        assert!((endpoint_error(&a, &b) - endpoint_error(&b, &a)).abs() < 1e-15);
        assert!(endpoint_error(&a, &b) > 0.0);
    }

    #[test]
    fn psnr_examples() {
        let a = Image::filled(4, 4, 0.5);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_IDENTICAL);
        let b = Image::filled(4, 4, 0.6);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&a, &Image::zeros(3, 4)).is_err());
    }
}
