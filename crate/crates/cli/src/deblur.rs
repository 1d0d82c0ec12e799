use prida::pyramid::build_plan;
use prida::types::save_kernel_png;
use prida::{load_image, save_image, save_kernel, solve_with_plan};

use crate::output::{dump_failure, ensure_dir, write_trace};
use crate::{CliError, DeblurArgs, Preset, DEFAULT_LAMBDA};

const STANDARD_KERNEL_SIZE: usize = 27;
const LARGE_KERNEL_SIZE: usize = 31;
const LARGE_LAMBDA: f64 = 2e-4;

/// Writes `recovered.png`, `kernel.txt`, `kernel.png` and one
/// `trace_L<level>.csv` per pyramid level (0 is the coarsest).
pub fn deblur(args: &DeblurArgs) -> Result<(), CliError> {
    let (preset_side, preset_lambda) = match args.preset.unwrap_or(Preset::Standard) {
        Preset::Standard => (STANDARD_KERNEL_SIZE, DEFAULT_LAMBDA),
        Preset::Large => (LARGE_KERNEL_SIZE, LARGE_LAMBDA),
    };
    let side = args.kernel_size.unwrap_or(preset_side);
    let cfg = args.solver.solver_config()?;
    let blurred = load_image(&args.input)?;
    let obj = args.solver.objective(blurred, preset_lambda)?;
    let (w, h) = obj.blurred.dims();
    if side > w.min(h) {
        return Err(CliError::Usage(format!("kernel side {side} exceeds the {w}x{h} image")));
    }
    let plan = build_plan((w, h), side, args.solver.scale_factor).map_err(crate::usage)?;
    ensure_dir(&args.out)?;

    let result = solve_with_plan(&obj, &plan, &cfg).map_err(|e| dump_failure(e, &args.out, "trace_failed.csv"))?;
    save_image(&result.image, args.out.join("recovered.png"))?;
    save_kernel(&result.kernel, args.out.join("kernel.txt"))?;
    save_kernel_png(&result.kernel, args.out.join("kernel.png"))?;
    for (i, trace) in result.traces.iter().enumerate() {
        write_trace(trace, &args.out.join(format!("trace_L{i}.csv")))?;
    }

    let iters: usize = result.traces.iter().map(|t| t.len()).sum();
    let objective = result.traces.last().and_then(|t| t.last()).map(|r| r.objective);
    println!(
        "{} levels (kernel sides {:?}), {iters} iterations, final objective {}",
        plan.len(),
        plan.kernel_sides(),
        objective.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6e}")),
    );
    Ok(())
}
