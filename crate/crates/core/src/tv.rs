//! Smoothed total variation of an image and its gradient.
//!
//! Both variants use forward differences with a zero difference at the far
//! edge. Absolute values and gradient magnitudes are smoothed as
//! `√(·² + ε²) − ε`, which is zero for constant images and differentiable
//! everywhere.

use crate::error::Error;
use crate::types::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TvVariant {
    /// `Σ |∇ₓf| + |∇ᵧf|`.
    AnisotropicP1,
    /// `Σ √(∇ₓf² + ∇ᵧf²)`.
    #[default]
    IsotropicP2,
}

impl std::str::FromStr for TvVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "anisotropic" | "anisotropic_p1" | "l1" | "p1" => Ok(TvVariant::AnisotropicP1),
            "isotropic" | "isotropic_p2" | "l2" | "p2" => Ok(TvVariant::IsotropicP2),
            other => Err(Error::invalid(format!("unknown TV variant {other:?}"))),
        }
    }
}

/// Forward differences of an image.
#[derive(Debug, Clone)]
pub struct GradientField {
    /// `f[y][x+1] − f[y][x]`, zero in the last column.
    pub gx: Image,
    /// `f[y+1][x] − f[y][x]`, zero in the last row.
    pub gy: Image,
}

pub fn gradient_field(f: &Image) -> GradientField {
    let (w, h) = f.dims();
    let (gx, gy) = forward_differences(f.data(), w, h);
    GradientField {
        gx: Image::from_raw(w, h, gx),
        gy: Image::from_raw(w, h, gy),
    }
}

fn forward_differences(f: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                gx[i] = f[i + 1] - f[i];
            }
            if y + 1 < h {
                gy[i] = f[i + w] - f[i];
            }
        }
    }
    (gx, gy)
}

/// `√(a + ε²) − ε` written without cancellation.
fn smoothed_norm(sq: f64, eps: f64) -> f64 {
    sq / ((sq + eps * eps).sqrt() + eps)
}

pub fn tv_value(f: &Image, variant: TvVariant, eps: f64) -> f64 {
    tv_value_raw(f.data(), f.width(), f.height(), variant, eps)
}

pub fn tv_grad(f: &Image, variant: TvVariant, eps: f64) -> Image {
    let (_, g) = tv_value_and_grad(f.data(), f.width(), f.height(), variant, eps);
    Image::from_raw(f.width(), f.height(), g)
}

pub(crate) fn tv_value_raw(f: &[f64], w: usize, h: usize, variant: TvVariant, eps: f64) -> f64 {
    debug_assert!(eps > 0.0);
    let (gx, gy) = forward_differences(f, w, h);
    match variant {
        TvVariant::AnisotropicP1 => gx
            .iter()
            .zip(&gy)
            .map(|(a, b)| smoothed_norm(a * a, eps) + smoothed_norm(b * b, eps))
            .sum(),
        TvVariant::IsotropicP2 => gx.iter().zip(&gy).map(|(a, b)| smoothed_norm(a * a + b * b, eps)).sum(),
    }
}

/// Value and gradient in one pass. The gradient is `−div(p)` where `p` is the
/// derivative of the smoothed norm with respect to each difference.
pub(crate) fn tv_value_and_grad(f: &[f64], w: usize, h: usize, variant: TvVariant, eps: f64) -> (f64, Vec<f64>) {
    debug_assert!(eps > 0.0);
    let (gx, gy) = forward_differences(f, w, h);
    let eps2 = eps * eps;
    let mut value = 0.0;
    let mut px = vec![0.0; w * h];
    let mut py = vec![0.0; w * h];
    for i in 0..w * h {
        let (a, b) = (gx[i], gy[i]);
        match variant {
            TvVariant::AnisotropicP1 => {
                let (na, nb) = ((a * a + eps2).sqrt(), (b * b + eps2).sqrt());
                value += smoothed_norm(a * a, eps) + smoothed_norm(b * b, eps);
                px[i] = a / na;
                py[i] = b / nb;
            }
            TvVariant::IsotropicP2 => {
                let sq = a * a + b * b;
                let n = (sq + eps2).sqrt();
                value += smoothed_norm(sq, eps);
                px[i] = a / n;
                py[i] = b / n;
            }
        }
    }
    let mut grad = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut g = -px[i] - py[i];
            if x > 0 {
                g += px[i - 1];
            }
            if y > 0 {
                g += py[i - w];
            }
            grad[i] = g;
        }
    }
    (value, grad)
}

/// Upper bound on the Hessian norm of the smoothed TV term: `‖∇‖² ≤ 8` and the
/// smoothed norm has curvature at most `1/ε`.
pub fn tv_curvature_bound(eps: f64) -> f64 {
    8.0 / eps
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const BOTH: [TvVariant; 2] = [TvVariant::AnisotropicP1, TvVariant::IsotropicP2];

    #[test]
    fn constant_image_has_zero_tv_and_gradient() {
        let f = Image::filled(5, 4, 0.37);
        for v in BOTH {
            assert_eq!(tv_value(&f, v, 1e-3), 0.0);
            assert!(tv_grad(&f, v, 1e-3).data().iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn hand_evaluated_anisotropic_values() {
        let eps = 1e-12;
        let f = Image::new(2, 1, vec![0.0, 1.0]).unwrap();
        assert!((tv_value(&f, TvVariant::AnisotropicP1, eps) - 1.0).abs() < 1e-9);

        let f = Image::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!((tv_value(&f, TvVariant::AnisotropicP1, eps) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_field_edges_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = Image::from_fn(4, 3, |_, _| rng.random());
        let g = gradient_field(&f);
        for y in 0..3 {
            assert_eq!(g.gx.get(3, y), 0.0);
        }
        for x in 0..4 {
            assert_eq!(g.gy.get(x, 2), 0.0);
        }
        assert_eq!(g.gx.get(0, 0), f.get(1, 0) - f.get(0, 0));
    }

    #[test]
    fn ramp_has_zero_interior_gradient() {
        // divergence of a constant field vanishes away from the edges
        let f = Image::from_fn(8, 8, |x, _| 0.1 * x as f64);
        let g = tv_grad(&f, TvVariant::IsotropicP2, 1e-3);
        for y in 0..8 {
            for x in 1..7 {
                assert!(g.get(x, y).abs() < 1e-12, "({x},{y}) = {}", g.get(x, y));
            }
        }
        assert!(g.get(0, 0) < 0.0);
        assert!(g.get(7, 0) > 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let eps = 1e-3;
        let h = 1e-6;
        for (w, hgt) in [(4, 4), (6, 5), (8, 8)] {
            let f = Image::from_fn(w, hgt, |_, _| rng.random());
            for v in BOTH {
                let g = tv_grad(&f, v, eps);
                let mut data = f.data().to_vec();
                for i in 0..data.len() {
                    let orig = data[i];
                    data[i] = orig + h;
                    let up = tv_value_raw(&data, w, hgt, v, eps);
                    data[i] = orig - h;
                    let down = tv_value_raw(&data, w, hgt, v, eps);
                    data[i] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let err = (fd - g.data()[i]).abs() / fd.abs().max(g.data()[i].abs()).max(1e-3);
                    assert!(err <= 1e-5, "{v:?} pixel {i}: fd {fd} vs {}", g.data()[i]);
                }
            }
        }
    }

    #[test]
    fn shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = Image::from_fn(6, 6, |_, _| rng.random());
        let shifted = f.map(|v| v + 0.25);
        for v in BOTH {
            let (a, b) = (tv_value(&f, v, 1e-3), tv_value(&shifted, v, 1e-3));
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn anisotropic_scaling_in_small_eps_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let f = Image::from_fn(7, 7, |_, _| rng.random());
        let eps = 1e-8;
        let base = tv_value(&f, TvVariant::AnisotropicP1, eps);
        for c in [-2.0, 0.5, 3.0] {
            let scaled = tv_value(&f.map(|v| c * v), TvVariant::AnisotropicP1, eps);
            assert!((scaled - c.abs() * base).abs() <= 1e-4 * scaled.abs());
        }
    }

    #[test]
    fn value_and_gradient_agree_with_standalone_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let f = Image::from_fn(5, 7, |_, _| rng.random());
        for v in BOTH {
            let (val, _) = tv_value_and_grad(f.data(), 5, 7, v, 1e-3);
            assert!((val - tv_value(&f, v, 1e-3)).abs() < 1e-12);
        }
    }
}
