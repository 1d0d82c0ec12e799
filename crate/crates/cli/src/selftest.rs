use prida::conv::{data_term, grad_f_data, grad_k_data};
use prida::robustness::run_stability_suite;
use prida::simplex::{entropic_step, is_in_simplex, kl, kl_prox, l1_distance, project_simplex, three_point_gap};
use prida::synthetic::{cartoon_image, motion_kernel};
use prida::tv::{tv_grad, tv_value};
use prida::{convolve, solve, uniform_kernel, Algorithm, Image, Kernel, Objective, SolverConfig, TvVariant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{CliError, SelftestArgs};

type Check = fn(&mut ChaCha8Rng) -> Result<(), String>;

const CHECKS: &[(&str, Check)] = &[
    ("data-term gradients", data_gradients),
    ("tv gradient", tv_gradient),
    ("entropic step equals kl prox", prox_equivalence),
    ("three-point inequality and pinsker", divergence_inequalities),
    ("simplex projection", projection),
    ("stability bound", stability),
    ("monotone descent", descent),
];

/// Runs every check and reports all failures together.
pub fn selftest(args: &SelftestArgs) -> Result<(), CliError> {
    let mut failed = Vec::new();
    for (i, (name, check)) in CHECKS.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(i as u64));
        match check(&mut rng) {
            Ok(()) => println!("ok   {name}"),
            Err(msg) => {
                println!("FAIL {name}: {msg}");
                failed.push(*name);
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Violation(format!("failed checks: {}", failed.join(", "))))
    }
}

fn random_simplex(rng: &mut ChaCha8Rng, s: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..s).map(|_| rng.random_range(1e-3..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    diff / b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8)
}

fn central_difference(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let h = 1e-6;
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn data_gradients(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let f = Image::new(7, 6, (0..42).map(|_| rng.random()).collect()).map_err(|e| e.to_string())?;
    let b = Image::new(7, 6, (0..42).map(|_| rng.random()).collect()).map_err(|e| e.to_string())?;
    let k = Kernel::from_weights(3, random_simplex(rng, 9)).map_err(|e| e.to_string())?;
    let obj = Objective::new(b, 0.0);
    let numeric = central_difference(f.data(), |x| {
        data_term(&Image::new(7, 6, x.to_vec()).unwrap(), &k, &obj).unwrap()
    });
    let analytic = grad_f_data(&f, &k, &obj).map_err(|e| e.to_string())?;
    let err_f = relative_gap(analytic.data(), &numeric);
    // Finite differences along the simplex: perturb one tap against the last.
    let g = grad_k_data(&f, &k, &obj).map_err(|e| e.to_string())?;
    let mut worst_k = 0.0f64;
    let h = 1e-6;
    for i in 0..8 {
        let shifted = |d: f64| {
            let mut w = k.weights().to_vec();
            w[i] += d;
            w[8] -= d;
            data_term(&f, &Kernel::new(3, w).unwrap(), &obj).unwrap()
        };
        let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
        let analytic = g[i] - g[8];
        worst_k = worst_k.max((numeric - analytic).abs() / analytic.abs().max(1e-3));
    }
    if err_f > 1e-5 || worst_k > 1e-5 {
        return Err(format!("image {err_f:e}, kernel {worst_k:e}"));
    }
    Ok(())
}

fn tv_gradient(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let f = Image::new(6, 5, (0..30).map(|_| rng.random()).collect()).map_err(|e| e.to_string())?;
    for variant in [TvVariant::IsotropicP2, TvVariant::AnisotropicP1] {
        let numeric = central_difference(f.data(), |x| {
            tv_value(&Image::new(6, 5, x.to_vec()).unwrap(), variant, 1e-2)
        });
        let err = relative_gap(tv_grad(&f, variant, 1e-2).data(), &numeric);
        if err > 1e-5 {
            return Err(format!("{variant:?}: {err:e}"));
        }
    }
    Ok(())
}

fn prox_equivalence(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for &s in &[2, 9, 169] {
        for _ in 0..20 {
            let k = random_simplex(rng, s);
            let g: Vec<f64> = (0..s).map(|_| rng.random_range(-10.0..10.0)).collect();
            let eta = rng.random_range(1e-3..2.0);
            let step = entropic_step(&k, &g, &vec![eta; s], f64::INFINITY).map_err(|e| e.to_string())?;
            let z: Vec<f64> = g.iter().map(|v| eta * v).collect();
            let prox = kl_prox(&k, &z).map_err(|e| e.to_string())?;
            let gap = step.iter().zip(&prox).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if gap > 1e-12 {
                return Err(format!("s = {s}: {gap:e}"));
            }
        }
    }
    Ok(())
}

fn divergence_inequalities(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for &s in &[2, 3, 5, 17] {
        for _ in 0..50 {
            let z: Vec<f64> = (0..s).map(|_| rng.random_range(-5.0..5.0)).collect();
            let (x, y) = (random_simplex(rng, s), random_simplex(rng, s));
            let gap = three_point_gap(&z, &x, &y).map_err(|e| e.to_string())?;
            if gap < -1e-10 {
                return Err(format!("three-point gap {gap:e} at s = {s}"));
            }
            let d = l1_distance(&x, &y);
            if kl(&x, &y) < 0.5 * d * d - 1e-15 {
                return Err(format!("pinsker fails at s = {s}"));
            }
        }
    }
    Ok(())
}

fn projection(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..100 {
        let v: Vec<f64> = (0..rng.random_range(1..30))
            .map(|_| rng.random_range(-3.0..3.0))
            .collect();
        let p = project_simplex(&v);
        if !is_in_simplex(&p) {
            return Err(format!("projection of {v:?} left the simplex"));
        }
    }
    Ok(())
}

fn stability(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let report = run_stability_suite(300, rng.random(), 1.0, f64::INFINITY).map_err(|e| e.to_string())?;
    match report.violations {
        0 => Ok(()),
        n => Err(format!("{n} violations")),
    }
}

fn descent(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let sharp = cartoon_image(24, 24, rng.random());
    let k = motion_kernel(5, 4.0, rng.random_range(0.0..3.1)).map_err(|e| e.to_string())?;
    let blurred = convolve(&sharp, &k, Default::default()).map_err(|e| e.to_string())?;
    let obj = Objective::new(blurred.clone(), 1e-2);
    for algo in [Algorithm::Prida, Algorithm::Pgd] {
        let cfg = SolverConfig::benchmark(algo, 50);
        let state = solve(&blurred, &uniform_kernel(5).unwrap(), &obj, &cfg).map_err(|e| e.to_string())?;
        let objectives = state.trace().objectives();
        if let Some(w) = objectives.windows(2).find(|w| w[1] > w[0] + 1e-8) {
            return Err(format!("{}: objective rose from {} to {}", algo.name(), w[0], w[1]));
        }
    }
    Ok(())
}
