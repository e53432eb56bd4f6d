//! Initialization by fitting: least-squares approximation of a reference
//! activation with a rational function, solved with Levenberg-Marquardt.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{RationalParams, Variant};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// Reference functions a rational can be fitted to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Target {
    Identity,
    Relu,
    LeakyRelu { slope: f64 },
    Tanh,
}

impl Target {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Target::Identity => x,
            Target::Relu => x.max(0.0),
            Target::LeakyRelu { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Target::Tanh => x.tanh(),
        }
    }

    /// Parses the command-line spelling (`identity`, `relu`, `leaky-relu`, `tanh`).
    pub fn parse(name: &str, leaky_slope: f64) -> Result<Self> {
        match name {
            "identity" => Ok(Target::Identity),
            "relu" => Ok(Target::Relu),
            "leaky-relu" | "leaky_relu" => Ok(Target::LeakyRelu { slope: leaky_slope }),
            "tanh" => Ok(Target::Tanh),
            other => Err(Error::Config(format!("unknown fit target `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub grid_points: usize,
    pub max_iterations: usize,
    /// Stop when a successful step reduces the cost by less than this fraction.
    pub rel_tolerance: f64,
    /// Regularizer scale used when fitting the constrained form.
    pub c: f64,
    /// Regularizer exponent; `None` means `n + 1`.
    pub d: Option<u32>,
    /// Keep a trainable `a_0` in the constrained form.
    pub constrained_a0: bool,
    /// Starting coefficients in trainable order; the identity rational when `None`.
    pub start: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            grid_points: 1001,
            max_iterations: 2000,
            rel_tolerance: 1e-14,
            c: crate::rational::DEFAULT_C,
            d: None,
            constrained_a0: false,
            start: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitResult {
    pub params: RationalParams,
    /// Mean squared residual on the grid.
    pub mse: f64,
    /// Largest absolute deviation from the target on the grid.
    pub max_abs_deviation: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Fits a rational of degrees `(n, m)` to `target` on a uniform grid over `range`.
///
/// The fit starts from the identity rational. For the constrained form `c` and `d`
/// are held fixed and only `a_i, b_j` are fitted. Because the denominator only
/// depends on `|b_j|`, the solver uses the one-sided derivative at `b_j = 0` (the
/// training subgradient there is 0, which would pin `b` at its start value) and
/// returns `|b_j|`.
pub fn fit_init(
    target: &Target,
    range: (f64, f64),
    degrees: (usize, usize),
    variant: Variant,
    opts: &FitOptions,
) -> Result<FitResult> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Config(format!("fit range must satisfy lo < hi, got [{lo}, {hi}]")));
    }
    if opts.grid_points < 2 {
        return Err(Error::Config("fit grid needs at least 2 points".into()));
    }
    let (n, m) = degrees;
    let (variant, with_a0) = match variant {
        Variant::Original => (Variant::Original, true),
        Variant::Constrained { .. } => (
            Variant::Constrained {
                c: opts.c,
                d: opts.d.unwrap_or(n as u32 + 1),
            },
            opts.constrained_a0,
        ),
    };
    let mut params = RationalParams::identity(n, m, variant, with_a0)?;
    if let Some(start) = &opts.start {
        params = params.with_trainable(start)?;
    }

    let grid: Vec<f64> = (0..opts.grid_points)
        .map(|i| lo + (hi - lo) * i as f64 / (opts.grid_points - 1) as f64)
        .collect();
    let targets: Vec<f64> = grid.iter().map(|&x| target.eval(x)).collect();
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::Config("target is not finite on the fit range".into()));
    }

    levenberg_marquardt(params, &grid, &targets, opts)
}

fn levenberg_marquardt(
    mut params: RationalParams,
    grid: &[f64],
    targets: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    let k = params.trainable_len();
    let n_num = params.numerator().len();
    let cost = |p: &RationalParams| -> f64 {
        grid.iter()
            .zip(targets)
            .map(|(&x, &t)| {
                let r = p.value(x) - t;
                r * r
            })
            .sum::<f64>()
    };

    let mut theta = params.trainable();
    let mut current = cost(&params);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut row = vec![0.0; k];

    while iterations < opts.max_iterations {
        iterations += 1;
        // Normal equations.
        let mut jtj = DMatrix::<f64>::zeros(k, k);
        let mut jtr = DVector::<f64>::zeros(k);
        for (&x, &t) in grid.iter().zip(targets) {
            let (f, _) = params.eval_with_grad(x, Some(&mut row));
            let den = params.denominator_value(x);
            for (j, b) in params.denominator().iter().enumerate() {
                if *b == 0.0 {
                    let power = params.denominator_degree() - j;
                    row[n_num + j] = -f / den * x.abs().powi(power as i32);
                }
            }
            let r = f - t;
            for a in 0..k {
                jtr[a] += row[a] * r;
                for b in a..k {
                    jtj[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                jtj[(a, b)] = jtj[(b, a)];
            }
        }
        if jtr.amax() < 1e-300 {
            converged = true;
            break;
        }

        // Marquardt damping; retry with more damping until the cost drops.
        let mut improved = false;
        for _ in 0..40 {
            let mut damped = jtj.clone();
            for a in 0..k {
                damped[(a, a)] += lambda * jtj[(a, a)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-&jtr)) else {
                lambda *= 4.0;
                continue;
            };
            let candidate: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
            if candidate.iter().any(|v| !v.is_finite()) {
                lambda *= 4.0;
                continue;
            }
            let trial = params.with_trainable(&candidate)?;
            let c = cost(&trial);
            if c < current {
                let rel = (current - c) / current.max(1e-300);
                theta = candidate;
                params = trial;
                current = c;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel < opts.rel_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 2.0;
        }
        if !improved {
            // No descent direction left at any damping: a stationary point.
            converged = true;
        }
        if converged {
            break;
        }
    }

    for b in theta[n_num..].iter_mut() {
        *b = b.abs();
    }
    params = params.with_trainable(&theta)?;
    let max_abs_deviation = grid
        .iter()
        .zip(targets)
        .fold(0.0_f64, |mx, (&x, &t)| mx.max((params.value(x) - t).abs()));
    Ok(FitResult {
        mse: cost(&params) / grid.len() as f64,
        params,
        max_abs_deviation,
        iterations,
        converged,
    })
}
