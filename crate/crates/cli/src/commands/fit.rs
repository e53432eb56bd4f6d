use ratact_core::fit::{fit_init, FitOptions, Target};
use ratact_core::rational::{RationalParams, Variant};
use serde::Serialize;

use crate::config::resolve_out_dir;
use crate::error::CliError;
use crate::output::OutDir;
use crate::{FitInitArgs, VariantArg};

#[derive(Serialize)]
struct FitReport<'a> {
    target: &'a Target,
    range: [f64; 2],
    degrees: [usize; 2],
    params: &'a RationalParams,
    /// Trainable coefficients in storage order (numerator high to low, then denominator).
    coefficients: Vec<f64>,
    mse: f64,
    max_abs_deviation: f64,
    iterations: usize,
    converged: bool,
}

pub fn run(a: &FitInitArgs) -> Result<(), CliError> {
    let (lo, hi) = (a.range[0], a.range[1]);
    if !(lo < hi) {
        return Err(CliError::Usage(format!("--range needs LO < HI, got {lo} {hi}")));
    }
    let target = Target::parse(&a.target, a.slope)?;
    let variant = match a.variant {
        VariantArg::Original => Variant::Original,
        VariantArg::Constrained => Variant::Constrained { c: a.c, d: a.d.unwrap_or(a.degrees[0] as u32 + 1) },
    };
    let opts = FitOptions {
        grid_points: a.grid,
        c: a.c,
        d: a.d,
        ..FitOptions::default()
    };
    let (n, m) = (a.degrees[0], a.degrees[1]);
    let fit = fit_init(&target, (lo, hi), (n, m), variant, &opts)?;

    let report = FitReport {
        target: &target,
        range: [lo, hi],
        degrees: [n, m],
        params: &fit.params,
        coefficients: fit.params.trainable(),
        mse: fit.mse,
        max_abs_deviation: fit.max_abs_deviation,
        iterations: fit.iterations,
        converged: fit.converged,
    };
    let out = OutDir::create(resolve_out_dir(a.out.as_deref(), None))?;
    out.write_json("fit_init.json", &report)?;
    let mut csv = String::from("x,target,fit,residual\n");
    for i in 0..a.grid {
        let x = lo + (hi - lo) * i as f64 / (a.grid - 1) as f64;
        let (t, f) = (target.eval(x), fit.params.value(x));
        csv.push_str(&format!("{x},{t},{f},{}\n", f - t));
    }
    out.write("fit_residuals.csv", &csv)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    if !fit.converged {
        return Err(CliError::Numeric(format!("fit did not converge after {} iterations", fit.iterations)));
    }
    Ok(())
}
