//! Stability instrumentation: pre-activation percentiles, activation-explosion
//! detection, gradient norms and coefficient drift.
//!
//! The explosion criterion is an operational definition. It flags a record when
//! any of the following holds:
//!
//! * the largest activation output exceeds `max_output` (default 1e4);
//! * the numerator-to-denominator coefficient ratio `|a| / (1 + |b|)` exceeds
//!   `max_ratio` (default 1e3) and the largest activation output is more than
//!   `spike_factor` (default 10) times its median over the previous `window`
//!   (default 50) records;
//! * the loss is not finite.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::{Forward, Mlp, StepReport};
use crate::rational::RationalParams;

/// Percentile levels recorded for every hidden layer.
pub const PERCENTILES: [f64; 5] = [0.05, 0.25, 0.50, 0.75, 0.95];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    /// Pre-activation P5, P25, P50, P75, P95.
    pub percentiles: [f64; 5],
    pub max_abs_output: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagRecord {
    pub step: u64,
    /// Training loss at this step; `None` for forward-only snapshots.
    pub loss: Option<f64>,
    pub layers: Vec<LayerStats>,
    pub coeff_grad_norm: f64,
    pub weight_grad_norm: f64,
    /// L2 norm of all numerator coefficients across rational layers.
    pub numerator_norm: f64,
    /// L2 norm of all denominator coefficients across rational layers.
    pub denominator_norm: f64,
    pub explosion: bool,
}

impl DiagRecord {
    pub(crate) fn from_forward(
        step: u64,
        loss: f64,
        fwd: &Forward,
        net: &Mlp,
        coeff_grad_norm: f64,
        weight_grad_norm: f64,
    ) -> Self {
        let mut rec = layer_record(step, fwd, net);
        rec.loss = Some(loss);
        rec.coeff_grad_norm = coeff_grad_norm;
        rec.weight_grad_norm = weight_grad_norm;
        rec.explosion = !loss.is_finite();
        rec
    }

    /// Record of a completed training step. Norms describe the coefficients the
    /// step's forward pass used.
    pub fn from_step(net: &Mlp, report: &StepReport) -> Self {
        let mut rec = layer_record(net.steps(), &report.forward, net);
        rec.loss = Some(report.loss);
        rec.coeff_grad_norm = report.coeff_grad_norm;
        rec.weight_grad_norm = report.weight_grad_norm;
        rec
    }

    pub fn max_abs_output(&self) -> f64 {
        self.layers.iter().map(|l| l.max_abs_output).fold(0.0, f64::max)
    }

    /// `|a| / (1 + |b|)`, the numerator-to-denominator coefficient ratio.
    pub fn coefficient_ratio(&self) -> f64 {
        self.numerator_norm / (1.0 + self.denominator_norm)
    }
}

fn layer_record(step: u64, fwd: &Forward, net: &Mlp) -> DiagRecord {
    let layers = (0..fwd.layers.len())
        .map(|l| LayerStats {
            percentiles: percentiles(fwd.preactivations(l).data()),
            max_abs_output: fwd.activations(l).data().iter().fold(0.0_f64, |m, v| {
                if v.is_nan() {
                    f64::INFINITY
                } else {
                    m.max(v.abs())
                }
            }),
        })
        .collect();
    let (num, den) = coefficient_norms(net.rationals().iter().flatten());
    DiagRecord {
        step,
        loss: None,
        layers,
        coeff_grad_norm: 0.0,
        weight_grad_norm: 0.0,
        numerator_norm: num,
        denominator_norm: den,
        explosion: false,
    }
}

fn coefficient_norms<'a>(params: impl Iterator<Item = &'a RationalParams>) -> (f64, f64) {
    let (mut num, mut den) = (0.0, 0.0);
    for p in params {
        num += p.numerator_norm().powi(2);
        den += p.denominator_norm().powi(2);
    }
    (num.sqrt(), den.sqrt())
}

/// Type-7 percentile (linear interpolation between order statistics) of sorted data.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// The five recorded percentiles of `values` (NaN entries sort last).
pub fn percentiles(values: &[f64]) -> [f64; 5] {
    if values.is_empty() {
        return [f64::NAN; 5];
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    PERCENTILES.map(|q| percentile_sorted(&sorted, q))
}

/// Forward-only record of `net` on `batch`. Gradient norms are reported as 0.
pub fn snapshot(net: &Mlp, batch: &Matrix) -> Result<DiagRecord> {
    if batch.rows() == 0 {
        return Err(Error::Contract("diagnostic snapshot needs a non-empty batch".into()));
    }
    let fwd = net.forward(batch)?;
    Ok(layer_record(net.steps(), &fwd, net))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplosionThresholds {
    pub max_output: f64,
    pub max_ratio: f64,
    pub spike_factor: f64,
    pub window: usize,
}

impl Default for ExplosionThresholds {
    fn default() -> Self {
        ExplosionThresholds {
            max_output: 1e4,
            max_ratio: 1e3,
            spike_factor: 10.0,
            window: 50,
        }
    }
}

/// Returns the reason when `record` is an explosion given the earlier `history`.
pub fn detect_explosion(record: &DiagRecord, history: &[DiagRecord], th: &ExplosionThresholds) -> Option<String> {
    if let Some(loss) = record.loss {
        if !loss.is_finite() {
            return Some(format!("non-finite loss ({loss})"));
        }
    }
    let out = record.max_abs_output();
    if !(out <= th.max_output) {
        return Some(format!("max |activation output| {out:.4e} exceeds {:.1e}", th.max_output));
    }
    let ratio = record.coefficient_ratio();
    if ratio > th.max_ratio && !history.is_empty() {
        let start = history.len().saturating_sub(th.window);
        let mut trailing: Vec<f64> = history[start..].iter().map(DiagRecord::max_abs_output).collect();
        trailing.sort_by(f64::total_cmp);
        let median = percentile_sorted(&trailing, 0.5);
        if out > th.spike_factor * median {
            return Some(format!(
                "coefficient ratio {ratio:.4e} exceeds {:.1e} with max |activation output| {out:.4e} above {}x trailing median {median:.4e}",
                th.max_ratio, th.spike_factor
            ));
        }
    }
    None
}

/// Runs [`detect_explosion`] over a series, setting each record's flag against
/// the records before it. Returns the index and reason of the first explosion.
pub fn flag_series(records: &mut [DiagRecord], th: &ExplosionThresholds) -> Option<(usize, String)> {
    let mut first = None;
    for i in 0..records.len() {
        let (history, rest) = records.split_at_mut(i);
        let reason = detect_explosion(&rest[0], history, th);
        rest[0].explosion = reason.is_some();
        if first.is_none() {
            first = reason.map(|r| (i, r));
        }
    }
    first
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub start_numerator_norm: f64,
    pub end_numerator_norm: f64,
    pub start_denominator_norm: f64,
    pub end_denominator_norm: f64,
    pub max_ratio: f64,
    /// Fraction of (layer, probe input) pairs whose final activation output has
    /// magnitude below [`COLLAPSE_LEVEL`].
    pub collapse_fraction: f64,
}

pub const COLLAPSE_LEVEL: f64 = 1e-3;

/// Probe inputs for the collapse indicator: `count` points spaced evenly over
/// `lo <= |x| <= hi`, both signs.
pub fn collapse_probe(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let half = (count / 2).max(1);
    let mut xs = Vec::with_capacity(2 * half);
    for i in 0..half {
        let t = if half == 1 { 0.0 } else { i as f64 / (half - 1) as f64 };
        let x = lo + (hi - lo) * t;
        xs.push(-x);
        xs.push(x);
    }
    xs
}

/// Default probe: the region beyond the typical pre-activation range,
/// `100 <= |x| <= 1000`.
pub fn default_collapse_probe() -> Vec<f64> {
    collapse_probe(100.0, 1000.0, 1000)
}

/// Fraction of probe inputs where `|f(x)| < COLLAPSE_LEVEL`, pooled over activations.
pub fn collapse_fraction(activations: &[RationalParams], probe: &[f64]) -> f64 {
    let total = activations.len() * probe.len();
    if total == 0 {
        return 0.0;
    }
    let dead = activations
        .iter()
        .flat_map(|p| probe.iter().map(move |&x| p.value(x)))
        .filter(|v| v.abs() < COLLAPSE_LEVEL)
        .count();
    dead as f64 / total as f64
}

/// Summarizes coefficient drift over a series of records. `final_activations`
/// are the rationals at the last step; the collapse indicator is evaluated on them.
pub fn drift_report(records: &[DiagRecord], final_activations: &[RationalParams], probe: &[f64]) -> Result<DriftReport> {
    if records.len() < 2 {
        return Err(Error::Contract(format!("drift report needs >= 2 records, got {}", records.len())));
    }
    let (first, last) = (&records[0], &records[records.len() - 1]);
    Ok(DriftReport {
        start_numerator_norm: first.numerator_norm,
        end_numerator_norm: last.numerator_norm,
        start_denominator_norm: first.denominator_norm,
        end_denominator_norm: last.denominator_norm,
        max_ratio: records.iter().map(DiagRecord::coefficient_ratio).fold(0.0, f64::max),
        collapse_fraction: collapse_fraction(final_activations, probe),
    })
}

/// CSV header for records with `layers` hidden layers.
pub fn csv_header(layers: usize) -> String {
    let mut h = String::from("step");
    for l in 0..layers {
        for p in ["p5", "p25", "p50", "p75", "p95"] {
            write!(h, ",l{l}_{p}").unwrap();
        }
    }
    for l in 0..layers {
        write!(h, ",l{l}_max_abs_out").unwrap();
    }
    h.push_str(",coeff_grad_norm,weight_grad_norm,numerator_norm,denominator_norm,explosion,loss");
    h
}

/// Writes records as CSV, one row per record, in the column order of [`csv_header`].
pub fn to_csv(records: &[DiagRecord]) -> String {
    let layers = records.first().map_or(0, |r| r.layers.len());
    let mut out = csv_header(layers);
    out.push('\n');
    for r in records {
        write!(out, "{}", r.step).unwrap();
        for l in &r.layers {
            for p in l.percentiles {
                write!(out, ",{p}").unwrap();
            }
        }
        for l in &r.layers {
            write!(out, ",{}", l.max_abs_output).unwrap();
        }
        write!(
            out,
            ",{},{},{},{},{},",
            r.coeff_grad_norm,
            r.weight_grad_norm,
            r.numerator_norm,
            r.denominator_norm,
            u8::from(r.explosion)
        )
        .unwrap();
        if let Some(loss) = r.loss {
            write!(out, "{loss}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ActivationKind, MlpSpec};
    use crate::rational::preset;

    fn record(max_out: f64, num: f64, den: f64) -> DiagRecord {
        DiagRecord {
            step: 0,
            loss: Some(1.0),
            layers: vec![LayerStats {
                percentiles: [0.0; 5],
                max_abs_output: max_out,
            }],
            coeff_grad_norm: 0.0,
            weight_grad_norm: 0.0,
            numerator_norm: num,
            denominator_norm: den,
            explosion: false,
        }
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(percentiles(&[2.5; 17]), [2.5; 5]);
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let p = percentiles(&v);
        assert_eq!(p[2], 50.5);
        // h = 99 * 0.05 = 4.95 -> 5 + 0.95
        assert!((p[0] - 5.95).abs() < 1e-12);
    }

    #[test]
    fn relu_snapshot_has_zero_coefficient_terms() {
        let net = Mlp::build(MlpSpec::uniform(vec![3, 5, 5, 2], ActivationKind::Relu, 1)).unwrap();
        let rec = snapshot(&net, &Matrix::filled(4, 3, 0.3)).unwrap();
        assert_eq!(rec.coeff_grad_norm, 0.0);
        assert_eq!(rec.numerator_norm, 0.0);
        assert_eq!(rec.layers.len(), 2);
        assert!(snapshot(&net, &Matrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn zero_history_never_flags() {
        let th = ExplosionThresholds::default();
        let hist = vec![record(0.0, 0.0, 0.0); 60];
        assert!(detect_explosion(&record(0.0, 0.0, 0.0), &hist, &th).is_none());
    }

    #[test]
    fn triggers_are_named() {
        let th = ExplosionThresholds::default();
        let r = detect_explosion(&record(2e4, 0.0, 0.0), &[], &th).unwrap();
        assert!(r.contains("exceeds"));
        let mut nan = record(1.0, 0.0, 0.0);
        nan.loss = Some(f64::NAN);
        assert!(detect_explosion(&nan, &[], &th).unwrap().contains("loss"));
        let hist = vec![record(10.0, 1.0, 0.0); 5];
        let r = detect_explosion(&record(500.0, 5e3, 1.0), &hist, &th).unwrap();
        assert!(r.contains("ratio"));
        // Ratio alone without an output spike does not fire.
        assert!(detect_explosion(&record(50.0, 5e3, 1.0), &hist, &th).is_none());
    }

    #[test]
    fn monotone_in_output() {
        let th = ExplosionThresholds::default();
        let hist: Vec<_> = (0..30).map(|i| record(1.0 + i as f64, 2e3, 0.5)).collect();
        let mut fired = false;
        for k in 0..200 {
            let out = 1.0 + 200.0 * k as f64;
            let f = detect_explosion(&record(out, 2e3, 0.5), &hist, &th).is_some();
            assert!(!fired || f);
            fired = f;
        }
        assert!(fired);
    }

    #[test]
    fn drift_of_frozen_series_is_zero() {
        let r = record(1.0, 3.0, 2.0);
        let rep = drift_report(&[r.clone(), r.clone(), r], &[], &[]).unwrap();
        assert_eq!(rep.start_numerator_norm, rep.end_numerator_norm);
        assert_eq!(rep.start_denominator_norm, rep.end_denominator_norm);
        assert!(drift_report(&[record(1.0, 0.0, 0.0)], &[], &[]).is_err());
    }

    #[test]
    fn grown_denominator_collapses_far_inputs() {
        let grown = RationalParams::constrained(vec![0.015, 1.38, 0.016], vec![87.0, 7.49], 2.0, 4).unwrap();
        let decayed = RationalParams::constrained(vec![-0.24, -0.05, 1.14], vec![0.0, 0.0], 2.0, 4).unwrap();
        let probe = default_collapse_probe();
        assert!(collapse_fraction(&[grown], &probe) > 0.5);
        assert!(collapse_fraction(&[decayed], &probe) < 0.05);
    }

    #[test]
    fn csv_columns_line_up() {
        let net = Mlp::build(MlpSpec::uniform(
            vec![2, 4, 4, 2],
            ActivationKind::Rational { init: preset("original_low").unwrap() },
            3,
        ))
        .unwrap();
        let rec = snapshot(&net, &Matrix::filled(3, 2, 1.0)).unwrap();
        let csv = to_csv(&[rec]);
        let mut lines = csv.lines();
        let h = lines.next().unwrap().split(',').count();
        assert_eq!(lines.next().unwrap().split(',').count(), h);
    }
}
