//! Noise injection and the one-step stability check of the kernel update
//! under perturbed gradients.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::conv::convolve;
use crate::error::{Error, Result};
use crate::metrics::{endpoint_error, psnr};
use crate::pyramid::solve_multiscale;
use crate::simplex::{entropic_step, l1_distance};
use crate::types::{Image, Kernel, Objective, SolverConfig, SIMPLEX_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseKind {
    /// Added to every pixel of an observation.
    #[default]
    GaussianPixel,
    /// Added to every coordinate of a gradient.
    GaussianGradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Standard deviation, in intensity units for pixel noise.
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn pixel(sigma: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::GaussianPixel,
            sigma,
            seed,
        }
    }

    pub fn gradient(sigma: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::GaussianGradient,
            sigma,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("noise sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }

    /// `len` i.i.d. draws from `N(0, sigma²)`.
    pub fn sample(&self, len: usize) -> Result<Vec<f64>> {
        self.validate()?;
        if self.sigma == 0.0 {
            return Ok(vec![0.0; len]);
        }
        let normal = Normal::new(0.0, self.sigma).map_err(|e| Error::invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok((0..len).map(|_| normal.sample(&mut rng)).collect())
    }
}

/// Adds i.i.d. Gaussian noise per pixel. The result is not clamped.
pub fn add_noise(img: &Image, spec: &NoiseSpec) -> Result<Image> {
    if spec.kind != NoiseKind::GaussianPixel {
        return Err(Error::invalid("image noise must be per-pixel"));
    }
    let noise = spec.sample(img.len())?;
    Image::new(
        img.width(),
        img.height(),
        img.data().iter().zip(noise).map(|(v, n)| v + n).collect(),
    )
}

/// Kernel updates from the same uniform start with the exact gradient `g`
/// and the perturbed gradient `g + noise`, one shared step `eta`.
///
/// Returns `(‖k_g − k_h‖₁, 2·eta·max|noise|)`.
pub fn stability_trial(k0: &[f64], g: &[f64], noise: &[f64], eta: f64, big_m: f64) -> Result<(f64, f64)> {
    if k0.is_empty() {
        return Err(Error::invalid("empty kernel"));
    }
    let first = k0[0];
    if k0.iter().any(|&v| (v - first).abs() > SIMPLEX_TOL) || (first * k0.len() as f64 - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::invalid("stability trials start from the uniform kernel"));
    }
    if noise.len() != g.len() {
        return Err(Error::invalid("noise and gradient lengths differ"));
    }
    let steps = vec![eta; k0.len()];
    let h: Vec<f64> = g.iter().zip(noise).map(|(a, b)| a + b).collect();
    let kg = entropic_step(k0, g, &steps, big_m)?;
    let kh = entropic_step(k0, &h, &steps, big_m)?;
    let noise_max = noise.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((l1_distance(&kg, &kh), 2.0 * eta * noise_max))
}

/// The image analogue: for the plain gradient step the perturbation moves the
/// iterate by exactly `eta·‖noise‖₂`. Returns `(‖f_g − f_h‖₂, eta·‖noise‖₂)`.
pub fn image_stability_trial(f0: &[f64], g: &[f64], noise: &[f64], eta: f64) -> (f64, f64) {
    let diff: f64 = f0
        .iter()
        .zip(g)
        .zip(noise)
        .map(|((f, g), a)| {
            let d = (f - eta * g) - (f - eta * (g + a));
            d * d
        })
        .sum();
    let norm: f64 = noise.iter().map(|a| a * a).sum::<f64>().sqrt();
    (diff.sqrt(), eta * norm)
}

/// Kernel sizes exercised by the randomized stability suite.
pub const STABILITY_SIZES: [usize; 3] = [4, 169, 729];
/// Slack allowed on the bound.
pub const STABILITY_SLACK: f64 = 1e-12;

/// One randomized trial of the kernel-update stability check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityRecord {
    pub trial: usize,
    pub size: usize,
    pub eta: f64,
    /// `max|noise|`.
    pub noise_max: f64,
    /// `‖k_g − k_h‖₁`.
    pub lhs: f64,
    /// `2·eta·max|noise|`.
    pub rhs: f64,
}

impl StabilityRecord {
    pub fn violates(&self, rhs_scale: f64) -> bool {
        self.lhs > rhs_scale * self.rhs + STABILITY_SLACK
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub trials: usize,
    pub violations: usize,
    /// Largest `lhs / rhs` seen.
    pub worst_ratio: f64,
    pub first_violation: Option<StabilityRecord>,
}

impl StabilityReport {
    /// Summary of `records` with the bound multiplied by `rhs_scale`.
    pub fn from_records(records: &[StabilityRecord], rhs_scale: f64) -> Self {
        let mut violating = records.iter().filter(|r| r.violates(rhs_scale));
        let first_violation = violating.next().copied();
        Self {
            trials: records.len(),
            violations: first_violation.map_or(0, |_| 1 + violating.count()),
            worst_ratio: records
                .iter()
                .filter(|r| r.rhs > 0.0)
                .fold(0.0f64, |m, r| m.max(r.lhs / r.rhs)),
            first_violation,
        }
    }
}

/// Randomized trials: each draws a size from [`STABILITY_SIZES`], a
/// gradient, a step and a noise vector with `eta·max|noise| ∈ (0, 1]`.
pub fn stability_records(trials: usize, seed: u64, big_m: f64) -> Result<Vec<StabilityRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|trial| {
            let size = STABILITY_SIZES[trial % STABILITY_SIZES.len()];
            let k0 = vec![1.0 / size as f64; size];
            let g_scale = 10f64.powf(rng.random_range(-2.0..2.0));
            let g: Vec<f64> = (0..size).map(|_| g_scale * rng.random_range(-1.0..1.0)).collect();
            let eta = 10f64.powf(rng.random_range(-3.0..1.0));
            let target = rng.random_range(f64::MIN_POSITIVE..=1.0);
            let raw = NoiseSpec::gradient(1.0, rng.random()).sample(size)?;
            let raw_max = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let noise: Vec<f64> = raw.iter().map(|v| v / raw_max * target / eta).collect();
            let (lhs, rhs) = stability_trial(&k0, &g, &noise, eta, big_m)?;
            Ok(StabilityRecord {
                trial,
                size,
                eta,
                noise_max: target / eta,
                lhs,
                rhs,
            })
        })
        .collect()
}

/// [`stability_records`] summarised against the bound scaled by `rhs_scale`.
/// Values below 1 are a fault-injection hook for checking that violations
/// are reported.
pub fn run_stability_suite(trials: usize, seed: u64, rhs_scale: f64, big_m: f64) -> Result<StabilityReport> {
    Ok(StabilityReport::from_records(
        &stability_records(trials, seed, big_m)?,
        rhs_scale,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSweepRow {
    pub sigma: f64,
    pub endpoint_error: f64,
    pub psnr: f64,
    pub runtime_s: f64,
}

/// For each sigma: blur the ground truth, add seeded noise, run the
/// coarse-to-fine solver and score the result. `obj` supplies λ, TV and
/// boundary settings; its observation is replaced per sigma.
pub fn noise_sweep(
    f_true: &Image,
    k_true: &Kernel,
    sigmas: &[f64],
    obj: &Objective,
    kernel_side: usize,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<Vec<NoiseSweepRow>> {
    let clean = convolve(f_true, k_true, obj.boundary)?;
    sigmas
        .iter()
        .enumerate()
        .map(|(i, &sigma)| {
            let start = Instant::now();
            let noisy = add_noise(&clean, &NoiseSpec::pixel(sigma, seed.wrapping_add(i as u64)))?;
            let out = solve_multiscale(&obj.with_blurred(noisy), kernel_side, cfg)?;
            Ok(NoiseSweepRow {
                sigma,
                endpoint_error: endpoint_error(&out.kernel, k_true),
                psnr: psnr(&out.image, f_true)?,
                runtime_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_is_identity() {
        let img = Image::from_fn(5, 5, |x, y| (x + y) as f64 / 10.0);
        assert_eq!(add_noise(&img, &NoiseSpec::pixel(0.0, 1)).unwrap(), img);
    }

    #[test]
    fn noise_is_seeded_and_unclamped() {
        let img = Image::filled(16, 16, 0.99);
        let a = add_noise(&img, &NoiseSpec::pixel(0.2, 9)).unwrap();
        assert_eq!(a, add_noise(&img, &NoiseSpec::pixel(0.2, 9)).unwrap());
        assert_ne!(a, add_noise(&img, &NoiseSpec::pixel(0.2, 10)).unwrap());
        assert!(a.min_max().1 > 1.0);
        assert!(add_noise(&img, &NoiseSpec::gradient(0.1, 1)).is_err());
        assert!(add_noise(&img, &NoiseSpec::pixel(-1.0, 1)).is_err());
    }

    #[test]
    fn noise_moments() {
        let sigma = 0.1;
        let img = Image::zeros(255, 255);
        let noisy = add_noise(&img, &NoiseSpec::pixel(sigma, 42)).unwrap();
        let n = noisy.len() as f64;
        let mean = noisy.mean();
        assert!(mean.abs() <= 3.0 * sigma / 255.0, "{mean}");
        let std = (noisy.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        assert!((std - sigma).abs() <= 0.05 * sigma, "{std}");
    }

    #[test]
    fn zero_noise_trial() {
        let (lhs, rhs) = stability_trial(&[0.25; 4], &[1.0, -2.0, 0.5, 0.0], &[0.0; 4], 0.3, 1e3).unwrap();
        assert_eq!((lhs, rhs), (0.0, 0.0));
    }

    #[test]
    fn two_point_trial_by_hand() {
        for (eta, a) in [(0.01, 0.5), (0.1, 2.0), (0.5, -1.5)] {
            let (lhs, rhs) = stability_trial(&[0.5, 0.5], &[0.0, 0.0], &[a, 0.0], eta, f64::INFINITY).unwrap();
            // k_h = (e^{−ηa}, 1)/(1 + e^{−ηa}), k_g = (½, ½)
            let expected = (eta * a / 2.0f64).tanh().abs();
            assert!((lhs - expected).abs() < 1e-15, "{lhs} vs {expected}");
            assert!(lhs <= rhs);
        }
    }

    #[test]
    fn non_uniform_start_is_rejected() {
        assert!(stability_trial(&[0.7, 0.3], &[0.0; 2], &[0.0; 2], 0.1, 1e3).is_err());
    }

    #[test]
    fn randomized_suite_has_no_violations() {
        let report = run_stability_suite(600, 5, 1.0, f64::INFINITY).unwrap();
        assert_eq!(report.violations, 0);
        assert!(report.worst_ratio <= 0.5 + 1e-12, "{}", report.worst_ratio);
    }

    #[test]
    fn shrunken_bound_is_violated() {
        let report = run_stability_suite(300, 5, 0.1, f64::INFINITY).unwrap();
        assert!(report.violations > 0);
        let first = report.first_violation.unwrap();
        assert!(first.lhs > 0.1 * first.rhs);
    }

    #[test]
    fn image_step_moves_by_noise_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f: Vec<f64> = (0..64).map(|_| rng.random()).collect();
        let g: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = NoiseSpec::gradient(0.3, 7).sample(64).unwrap();
        let (lhs, rhs) = image_stability_trial(&f, &g, &a, 0.25);
        assert!((lhs - rhs).abs() <= 1e-14 * rhs, "{lhs} vs {rhs}");
    }

    #[test]
    fn sweep_has_one_row_per_sigma() {
        let f = crate::synthetic::cartoon_image(16, 16, 1);
        let k = Kernel::delta(3).unwrap();
        let obj = Objective::new(f.clone(), 1e-3);
        let cfg = SolverConfig::default().with_max_iters(5);
        let rows = noise_sweep(&f, &k, &[0.0, 0.01], &obj, 3, &cfg, 1).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].sigma, 0.01);
    }
}
