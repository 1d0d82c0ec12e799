use std::path::Path;

use prida::robustness::{noise_sweep, stability_records, NoiseSweepRow, StabilityReport};
use prida::synthetic::{cartoon_image, motion_suite};
use prida::{build_plan, convolve, finest_level_start, load_image, solve, Algorithm, Image, Kernel, SolverConfig};
use rayon::prelude::*;

use crate::output::{dump_failure, ensure_dir, CsvFile};
use crate::{usage, BlurKind, CliError, ConvergenceArgs, NoiseArgs, StabilityArgs, SuiteArgs, DEFAULT_LAMBDA};

/// Ground truth pairs for the synthetic benchmarks.
fn suite_instances(suite: &SuiteArgs, count: usize) -> Result<Vec<(Image, Kernel)>, CliError> {
    if suite.kernel_size > suite.size {
        return Err(CliError::Usage(format!(
            "kernel side {} exceeds image side {}",
            suite.kernel_size, suite.size
        )));
    }
    match suite.blur {
        BlurKind::Motion => Ok(motion_suite(count, suite.size, suite.kernel_size, suite.seed)
            .map_err(usage)?
            .into_iter()
            .map(|inst| (inst.sharp, inst.kernel))
            .collect()),
        BlurKind::Delta => {
            let delta = Kernel::delta(suite.kernel_size).map_err(usage)?;
            Ok((0..count as u64)
                .map(|i| {
                    (
                        cartoon_image(suite.size, suite.size, suite.seed.wrapping_add(i)),
                        delta.clone(),
                    )
                })
                .collect())
        }
    }
}

/// Writes `convergence.csv` with one row per finest-level iteration:
/// `t,prida_objective,prida_move_l2,pgd_objective,pgd_move_l2`.
pub fn bench_convergence(args: &ConvergenceArgs) -> Result<(), CliError> {
    if args.bench_iters == 0 {
        return Err(CliError::Usage("--bench-iters must be positive".into()));
    }
    let cfg = args.solver.solver_config()?;
    let blurred = match &args.input {
        Some(path) => load_image(path)?,
        None => {
            let (sharp, kernel) = suite_instances(&args.suite, 1)?.remove(0);
            convolve(&sharp, &kernel, args.solver.boundary)?
        }
    };
    let obj = args.solver.objective(blurred, DEFAULT_LAMBDA)?;
    let plan = build_plan(obj.blurred.dims(), args.suite.kernel_size, args.solver.scale_factor).map_err(usage)?;
    ensure_dir(&args.out)?;

    let fail = |e| dump_failure(e, &args.out, "trace_failed.csv");
    let start_cfg = cfg.clone().with_algorithm(Algorithm::Prida);
    let (f0, k0) = finest_level_start(&obj, &plan, &start_cfg).map_err(fail)?;
    // The finest level runs the plain algorithms: fixed length, no backtracking.
    let run = |algorithm| {
        let bench = SolverConfig {
            algorithm,
            max_iters: args.bench_iters,
            tol_move: Some(0.0),
            descent_guard: false,
            ..cfg.clone()
        };
        solve(&f0, &k0, &obj, &bench)
    };
    let (prida, pgd) = rayon::join(|| run(Algorithm::Prida), || run(Algorithm::Pgd));
    let (prida, pgd) = (prida.map_err(fail)?, pgd.map_err(fail)?);

    let path = args.out.join("convergence.csv");
    let mut csv = CsvFile::create(
        &path,
        &["t", "prida_objective", "prida_move_l2", "pgd_objective", "pgd_move_l2"],
    )?;
    for (a, b) in prida.trace().records().iter().zip(pgd.trace().records()) {
        csv.row([
            a.t.to_string(),
            a.objective.to_string(),
            a.move_l2.to_string(),
            b.objective.to_string(),
            b.move_l2.to_string(),
        ])?;
    }
    csv.finish()?;
    println!(
        "{} iterations from a start with kernel side {}: prida {:.6e}, pgd {:.6e}",
        args.bench_iters,
        k0.side(),
        prida.objective(),
        pgd.objective()
    );
    Ok(())
}

struct SweepResult {
    algorithm: Algorithm,
    instance: usize,
    rows: Vec<NoiseSweepRow>,
}

/// Kernel error and PSNR against pixel-noise level. Writes per-instance
/// scores (`noise_instances.csv`), per-(algorithm, sigma) means
/// (`noise.csv`) and wall-clock times kept apart so the score files stay
/// reproducible (`noise_timing.csv`).
pub fn bench_noise(args: &NoiseArgs) -> Result<(), CliError> {
    if args.instances == 0 || args.algos.is_empty() || args.sigmas.is_empty() {
        return Err(CliError::Usage(
            "need at least one instance, algorithm and sigma".into(),
        ));
    }
    if let Some(bad) = args.sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(CliError::Usage(format!("sigma must be finite and >= 0, got {bad}")));
    }
    let cfg = args.solver.solver_config()?;
    let instances = suite_instances(&args.suite, args.instances)?;
    let template = args.solver.objective(instances[0].0.clone(), DEFAULT_LAMBDA)?;
    build_plan(
        template.blurred.dims(),
        args.suite.kernel_size,
        args.solver.scale_factor,
    )
    .map_err(usage)?;
    ensure_dir(&args.out)?;

    let jobs: Vec<(Algorithm, usize)> = args
        .algos
        .iter()
        .flat_map(|&a| (0..instances.len()).map(move |i| (a, i)))
        .collect();
    let results: Vec<SweepResult> = jobs
        .par_iter()
        .map(|&(algorithm, i)| {
            let (f_true, k_true) = &instances[i];
            // Same noise realisations for every algorithm.
            let noise_seed = args.suite.seed.wrapping_add(100 + ((i as u64) << 16));
            let rows = noise_sweep(
                f_true,
                k_true,
                &args.sigmas,
                &template,
                args.suite.kernel_size,
                &cfg.clone().with_algorithm(algorithm),
                noise_seed,
            )?;
            Ok(SweepResult {
                algorithm,
                instance: i,
                rows,
            })
        })
        .collect::<prida::Result<_>>()
        .map_err(|e| dump_failure(e, &args.out, "trace_failed.csv"))?;

    write_instance_scores(&args.out.join("noise_instances.csv"), &results)?;
    write_timings(&args.out.join("noise_timing.csv"), &results)?;

    let path = args.out.join("noise.csv");
    let mut csv = CsvFile::create(
        &path,
        &["algo", "sigma", "sigma_255", "endpoint_error", "psnr", "instances"],
    )?;
    println!(
        "{:<6} {:>9} {:>14} {:>9}",
        "algo", "sigma*255", "endpoint_err", "psnr_db"
    );
    for &algorithm in &args.algos {
        let mine: Vec<&SweepResult> = results.iter().filter(|r| r.algorithm == algorithm).collect();
        for (j, &sigma) in args.sigmas.iter().enumerate() {
            let n = mine.len() as f64;
            let ee = mine.iter().map(|r| r.rows[j].endpoint_error).sum::<f64>() / n;
            let psnr = mine.iter().map(|r| r.rows[j].psnr).sum::<f64>() / n;
            csv.row([
                algorithm.name().to_string(),
                sigma.to_string(),
                (sigma * 255.0).to_string(),
                ee.to_string(),
                psnr.to_string(),
                mine.len().to_string(),
            ])?;
            println!(
                "{:<6} {:>9.3} {:>14.6e} {:>9.3}",
                algorithm.name(),
                sigma * 255.0,
                ee,
                psnr
            );
        }
    }
    csv.finish()
}

fn write_instance_scores(path: &Path, results: &[SweepResult]) -> Result<(), CliError> {
    let mut csv = CsvFile::create(
        path,
        &["algo", "instance", "sigma", "sigma_255", "endpoint_error", "psnr"],
    )?;
    for r in results {
        for row in &r.rows {
            csv.row([
                r.algorithm.name().to_string(),
                r.instance.to_string(),
                row.sigma.to_string(),
                (row.sigma * 255.0).to_string(),
                row.endpoint_error.to_string(),
                row.psnr.to_string(),
            ])?;
        }
    }
    csv.finish()
}

fn write_timings(path: &Path, results: &[SweepResult]) -> Result<(), CliError> {
    let mut csv = CsvFile::create(path, &["algo", "instance", "sigma", "runtime_s"])?;
    for r in results {
        for row in &r.rows {
            csv.row([
                r.algorithm.name().to_string(),
                r.instance.to_string(),
                row.sigma.to_string(),
                row.runtime_s.to_string(),
            ])?;
        }
    }
    csv.finish()
}

/// Exits with a violation when any trial breaks the (optionally scaled)
/// bound `‖k_g − k_h‖₁ ≤ 2·η·max|noise|`.
pub fn bench_stability(args: &StabilityArgs) -> Result<(), CliError> {
    if !(args.rhs_scale > 0.0 && args.rhs_scale.is_finite()) {
        return Err(CliError::Usage(format!(
            "--inject-rhs-scale must be > 0, got {}",
            args.rhs_scale
        )));
    }
    if !(args.big_m >= 1.0) {
        return Err(CliError::Usage(format!("--big-m must be >= 1, got {}", args.big_m)));
    }
    let records = stability_records(args.trials, args.seed, args.big_m)?;
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        let path = dir.join("stability.csv");
        let mut csv = CsvFile::create(&path, &["trial", "size", "eta", "noise_max", "lhs", "rhs"])?;
        for r in &records {
            csv.row([
                r.trial.to_string(),
                r.size.to_string(),
                r.eta.to_string(),
                r.noise_max.to_string(),
                r.lhs.to_string(),
                r.rhs.to_string(),
            ])?;
        }
        csv.finish()?;
    }
    let report = StabilityReport::from_records(&records, args.rhs_scale);
    println!(
        "{} trials, {} violations, worst lhs/rhs {:.6}",
        report.trials, report.violations, report.worst_ratio
    );
    match report.first_violation {
        None => Ok(()),
        Some(r) => Err(CliError::Violation(format!(
            "trial {} (s = {}, eta = {:e}, max|noise| = {:e}): lhs {:e} > {} x rhs {:e}",
            r.trial, r.size, r.eta, r.noise_max, r.lhs, args.rhs_scale, r.rhs
        ))),
    }
}
