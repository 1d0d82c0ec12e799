//! Seeded synthetic instances: piecewise-constant images and common blur
//! kernels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conv::{convolve, BoundaryMode};
use crate::error::Result;
use crate::types::{check_odd_side, Image, Kernel};

/// Piecewise-constant image of random rectangles and disks on a flat
/// background, values in `[0.1, 0.9]`.
pub fn cartoon_image(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = vec![rng.random_range(0.1..0.9); width * height];
    let (wf, hf) = (width as f64, height as f64);
    let shapes = 6 + (width * height / 1024).min(10);
    for _ in 0..shapes {
        let value = rng.random_range(0.1..0.9);
        if rng.random_bool(0.5) {
            let x0 = rng.random_range(0.0..wf * 0.8);
            let y0 = rng.random_range(0.0..hf * 0.8);
            let x1 = x0 + rng.random_range(wf * 0.1..wf * 0.5);
            let y1 = y0 + rng.random_range(hf * 0.1..hf * 0.5);
            for y in 0..height {
                for x in 0..width {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    if px >= x0 && px < x1 && py >= y0 && py < y1 {
                        img[y * width + x] = value;
                    }
                }
            }
        } else {
            let cx = rng.random_range(0.0..wf);
            let cy = rng.random_range(0.0..hf);
            let r = rng.random_range(0.05..0.25) * wf.min(hf);
            for y in 0..height {
                for x in 0..width {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    if dx * dx + dy * dy <= r * r {
                        img[y * width + x] = value;
                    }
                }
            }
        }
    }
    Image::new(width, height, img).expect("finite values")
}

/// Linear motion blur: a centred segment of `length` pixels at `angle`
/// radians, rasterised with bilinear splatting.
pub fn motion_kernel(side: usize, length: f64, angle: f64) -> Result<Kernel> {
    check_odd_side(side)?;
    let c = (side / 2) as f64;
    let half = (length - 1.0).max(0.0) / 2.0;
    let mut taps = vec![0.0; side * side];
    let samples = (8.0 * length).ceil().max(1.0) as usize;
    for i in 0..=samples {
        let t = if samples == 0 {
            0.0
        } else {
            -half + 2.0 * half * i as f64 / samples as f64
        };
        let x = (c + t * angle.cos()).clamp(0.0, (side - 1) as f64);
        let y = (c + t * angle.sin()).clamp(0.0, (side - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (tx, ty) = (x - x0 as f64, y - y0 as f64);
        let x1 = (x0 + 1).min(side - 1);
        let y1 = (y0 + 1).min(side - 1);
        taps[y0 * side + x0] += (1.0 - tx) * (1.0 - ty);
        taps[y0 * side + x1] += tx * (1.0 - ty);
        taps[y1 * side + x0] += (1.0 - tx) * ty;
        taps[y1 * side + x1] += tx * ty;
    }
    Kernel::from_weights(side, taps)
}

/// Isotropic Gaussian blur truncated to the kernel support.
pub fn gaussian_kernel(side: usize, sigma: f64) -> Result<Kernel> {
    check_odd_side(side)?;
    let c = (side / 2) as f64;
    let taps = (0..side * side)
        .map(|i| {
            let (u, v) = ((i % side) as f64 - c, (i / side) as f64 - c);
            (-(u * u + v * v) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    Kernel::from_weights(side, taps)
}

/// Ground truth and its noiseless blurred observation.
#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub sharp: Image,
    pub kernel: Kernel,
    pub blurred: Image,
}

impl SyntheticInstance {
    pub fn new(sharp: Image, kernel: Kernel, boundary: BoundaryMode) -> Result<Self> {
        let blurred = convolve(&sharp, &kernel, boundary)?;
        Ok(Self { sharp, kernel, blurred })
    }
}

/// `count` cartoon images, each blurred by a motion kernel with a seeded
/// random angle and length between half and the full kernel side.
pub fn motion_suite(count: usize, size: usize, kernel_side: usize, seed: u64) -> Result<Vec<SyntheticInstance>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let image_seed = rng.random();
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            let length = rng.random_range(0.5..=1.0) * kernel_side as f64;
            let kernel = motion_kernel(kernel_side, length, angle)?;
            SyntheticInstance::new(cartoon_image(size, size, image_seed), kernel, BoundaryMode::Circular)
        })
        .collect()
}
