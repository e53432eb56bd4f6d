//! Empirical neural tangent kernel.
//!
//! Each sample contributes one scalar, the sum of the network's outputs, so the
//! kernel is `B x B` with `K = J J^T` over every trainable parameter
//! (activation coefficients included).

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::Mlp;

pub const DEFAULT_RANK_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NtkReport {
    pub kernel: Matrix,
    /// Descending, with round-off negatives clipped to 0.
    pub eigenvalues: Vec<f64>,
    pub numerical_rank: usize,
    pub batch_size: usize,
    pub step: u64,
    /// Smallest eigenvalue before clipping, relative to the largest.
    pub min_relative_eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NtkSummary {
    pub step: u64,
    pub batch_size: usize,
    pub rank: usize,
    pub lambda_max: f64,
    pub lambda_min: f64,
}

impl NtkReport {
    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn summary(&self) -> NtkSummary {
        NtkSummary {
            step: self.step,
            batch_size: self.batch_size,
            rank: self.numerical_rank,
            lambda_max: self.lambda_max(),
            lambda_min: self.lambda_min(),
        }
    }

    pub fn eigenvalues_csv(&self) -> String {
        let mut s = String::from("index,eigenvalue\n");
        for (i, v) in self.eigenvalues.iter().enumerate() {
            s.push_str(&format!("{i},{v}\n"));
        }
        s
    }
}

/// Kernel of a precomputed Jacobian (`B x P`).
pub fn kernel_from_jacobian(jacobian: &Matrix, step: u64) -> Result<NtkReport> {
    let b = jacobian.rows();
    if b < 2 {
        return Err(Error::Contract(format!("NTK needs a batch of at least 2, got {b}")));
    }
    let kernel = jacobian.matmul_transposed(jacobian)?;
    let scale = kernel.max_abs().max(f64::MIN_POSITIVE);
    let asym = (0..b)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| (kernel[(i, j)] - kernel[(j, i)]).abs())
        .fold(0.0, f64::max);
    if asym > 1e-8 * scale {
        return Err(Error::Contract(format!("kernel asymmetry {asym:e} exceeds tolerance")));
    }
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(b, b, kernel.data()));
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let lmax = values[0];
    let min_relative_eigenvalue = if lmax > 0.0 { values[b - 1] / lmax } else { 0.0 };
    for v in &mut values {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let numerical_rank = numerical_rank(&values, DEFAULT_RANK_TOL);
    Ok(NtkReport {
        kernel,
        eigenvalues: values,
        numerical_rank,
        batch_size: b,
        step,
        min_relative_eigenvalue,
    })
}

pub fn empirical_ntk(net: &Mlp, batch: &Matrix) -> Result<NtkReport> {
    if batch.rows() < 2 {
        return Err(Error::Contract(format!("NTK needs a batch of at least 2, got {}", batch.rows())));
    }
    let j = net.per_sample_jacobian(batch)?;
    if !j.all_finite() {
        let mut bad = Vec::new();
        let mut col = 0;
        for p in net.params() {
            let cols = col..col + p.value.len();
            if (0..j.rows()).any(|r| j.row(r)[cols.clone()].iter().any(|v| !v.is_finite())) {
                bad.push(p.name.clone());
            }
            col = cols.end;
        }
        return Err(Error::Explosion {
            reason: format!("non-finite Jacobian entries for {}", bad.join(", ")),
            snapshot: None,
        });
    }
    kernel_from_jacobian(&j, net.steps())
}

/// Number of eigenvalues above `tol * lambda_max`. Expects descending order.
pub fn numerical_rank(eigenvalues: &[f64], tol: f64) -> usize {
    let Some(&lmax) = eigenvalues.first() else {
        return 0;
    };
    if !(lmax > 0.0) {
        return 0;
    }
    eigenvalues.iter().filter(|&&v| v > tol * lmax).count()
}

/// Kernel snapshots on a fixed probe batch. `advance` trains the network for
/// `every` steps between snapshots; the first snapshot is taken before training.
pub fn ntk_trace(
    net: &mut Mlp,
    probe: &Matrix,
    snapshots: usize,
    every: usize,
    mut advance: impl FnMut(&mut Mlp, usize) -> Result<()>,
) -> Result<Vec<NtkReport>> {
    if every == 0 {
        return Err(Error::Config("NTK trace interval must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(snapshots);
    for i in 0..snapshots {
        if i > 0 {
            advance(net, every)?;
        }
        out.push(empirical_ntk(net, probe)?);
    }
    Ok(out)
}
