//! Define-by-run reverse-mode tape over dense matrices.
//!
//! A tape is built fresh for each forward pass. Every node stores its value and
//! the ids of its parents; parents always have smaller ids, so a backward pass is
//! a single sweep over ids in decreasing order.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rational::RationalParams;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Affine {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    Rational {
        input: NodeId,
        coeffs: NodeId,
        template: RationalParams,
    },
    Relu {
        input: NodeId,
    },
    LeakyRelu {
        input: NodeId,
        slope: f64,
    },
    LayerNorm {
        input: NodeId,
        gain: NodeId,
        shift: NodeId,
        normalized: Matrix,
        inv_std: Vec<f64>,
    },
    RowSum {
        input: NodeId,
    },
    SoftmaxCrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Matrix,
    },
    Mse {
        pred: NodeId,
        target: Matrix,
    },
}

impl Op {
    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => vec![],
            Op::Affine { input, weight, bias } => vec![*input, *weight, *bias],
            Op::Rational { input, coeffs, .. } => vec![*input, *coeffs],
            Op::Relu { input } | Op::LeakyRelu { input, .. } | Op::RowSum { input } => vec![*input],
            Op::LayerNorm { input, gain, shift, .. } => vec![*input, *gain, *shift],
            Op::SoftmaxCrossEntropy { logits, .. } => vec![*logits],
            Op::Mse { pred, .. } => vec![*pred],
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<NodeId>,
}

/// Parameter gradients produced by a backward pass, keyed by node id.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    grads: BTreeMap<NodeId, Matrix>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.get(&id)
    }

    /// Gradient for `id`; panics if `id` is not a parameter of the tape.
    pub fn of(&self, id: NodeId) -> &Matrix {
        &self.grads[&id]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Matrix)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant input.
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// A trainable leaf; gets a gradient from every backward pass.
    pub fn param(&mut self, value: Matrix) -> NodeId {
        let id = self.push(value, Op::Leaf);
        self.params.push(id);
        id
    }

    pub fn params(&self) -> &[NodeId] {
        &self.params
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Parent ids of a node, in operand order.
    pub fn parents_of(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id.0].op.parents()
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        let id = NodeId(self.nodes.len());
        debug_assert!(op.parents().iter().all(|p| p.0 < id.0));
        self.nodes.push(Node { value, op });
        id
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::Index(format!("node {} not on tape of {} nodes", id.0, self.nodes.len())))
        }
    }

    /// `input · weight + bias`, with `bias` (1 x out) broadcast over rows.
    pub fn affine(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        for id in [input, weight, bias] {
            self.check(id)?;
        }
        let x = self.value(input);
        let w = self.value(weight);
        let b = self.value(bias);
        if x.cols() != w.rows() {
            return Err(Error::dim("affine", x.shape(), w.shape()));
        }
        if b.rows() != 1 || b.cols() != w.cols() {
            return Err(Error::dim("affine bias", b.shape(), (1, w.cols())));
        }
        let mut out = x.matmul(w)?;
        for r in 0..out.rows() {
            for (o, bv) in out.row_mut(r).iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        Ok(self.push(out, Op::Affine { input, weight, bias }))
    }

    /// Applies the rational described by `template` elementwise, with its trainable
    /// coefficients read from `coeffs` (1 x k).
    pub fn rational(
        &mut self,
        input: NodeId,
        coeffs: NodeId,
        template: &RationalParams,
    ) -> Result<NodeId> {
        self.check(input)?;
        self.check(coeffs)?;
        let cv = self.value(coeffs);
        if cv.rows() != 1 || cv.cols() != template.trainable_len() {
            return Err(Error::dim("rational coefficients", cv.shape(), (1, template.trainable_len())));
        }
        let params = template.with_trainable(cv.data())?;
        let out = self.value(input).map(|x| params.value(x));
        Ok(self.push(
            out,
            Op::Rational {
                input,
                coeffs,
                template: params,
            },
        ))
    }

    pub fn relu(&mut self, input: NodeId) -> Result<NodeId> {
        self.check(input)?;
        let out = self.value(input).map(|x| x.max(0.0));
        Ok(self.push(out, Op::Relu { input }))
    }

    pub fn leaky_relu(&mut self, input: NodeId, slope: f64) -> Result<NodeId> {
        self.check(input)?;
        let out = self.value(input).map(|x| if x > 0.0 { x } else { slope * x });
        Ok(self.push(out, Op::LeakyRelu { input, slope }))
    }

    /// Per-row normalization to zero mean and unit variance followed by a
    /// trainable affine map (`gain`, `shift`, both 1 x cols).
    pub fn layer_norm(&mut self, input: NodeId, gain: NodeId, shift: NodeId, eps: f64) -> Result<NodeId> {
        for id in [input, gain, shift] {
            self.check(id)?;
        }
        let x = self.value(input);
        let cols = x.cols();
        for id in [gain, shift] {
            let v = self.value(id);
            if v.shape() != (1, cols) {
                return Err(Error::dim("layer_norm affine", v.shape(), (1, cols)));
            }
        }
        let g = self.value(gain).data();
        let s = self.value(shift).data();
        let mut normalized = Matrix::zeros(x.rows(), cols);
        let mut out = Matrix::zeros(x.rows(), cols);
        let mut inv_std = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for c in 0..cols {
                let xh = (row[c] - mean) * is;
                normalized[(r, c)] = xh;
                out[(r, c)] = g[c] * xh + s[c];
            }
        }
        Ok(self.push(
            out,
            Op::LayerNorm {
                input,
                gain,
                shift,
                normalized,
                inv_std,
            },
        ))
    }

    /// The normalized (pre-affine) values of a layer-norm node.
    pub fn layer_norm_normalized(&self, id: NodeId) -> Option<&Matrix> {
        match &self.nodes.get(id.0)?.op {
            Op::LayerNorm { normalized, .. } => Some(normalized),
            _ => None,
        }
    }

    /// Sums each row, producing a (rows x 1) column.
    pub fn row_sum(&mut self, input: NodeId) -> Result<NodeId> {
        self.check(input)?;
        let x = self.value(input);
        let sums: Vec<f64> = (0..x.rows()).map(|r| x.row(r).iter().sum()).collect();
        Ok(self.push(Matrix::column_vector(&sums), Op::RowSum { input }))
    }

    /// Mean cross-entropy of row-wise softmax against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        self.check(logits)?;
        let z = self.value(logits);
        if labels.len() != z.rows() {
            return Err(Error::dim("softmax_cross_entropy labels", (labels.len(), 1), z.shape()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= z.cols()) {
            return Err(Error::Index(format!("label {bad} outside [0, {})", z.cols())));
        }
        let mut probs = Matrix::zeros(z.rows(), z.cols());
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = z.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let lse = max + sum_exp.ln();
            total += lse - row[label];
            for (p, v) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (v - max).exp() / sum_exp;
            }
        }
        let loss = Matrix::filled(1, 1, total / z.rows().max(1) as f64);
        Ok(self.push(
            loss,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Mean of squared elementwise differences.
    pub fn mse_loss(&mut self, pred: NodeId, target: &Matrix) -> Result<NodeId> {
        self.check(pred)?;
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(Error::dim("mse_loss", p.shape(), target.shape()));
        }
        let n = p.len().max(1) as f64;
        let sse: f64 = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(self.push(
            Matrix::filled(1, 1, sse / n),
            Op::Mse {
                pred,
                target: target.clone(),
            },
        ))
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        self.check(loss)?;
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Contract(format!("backward needs a 1x1 loss, got {shape:?}")));
        }
        self.backward_seeded(loss, Matrix::filled(1, 1, 1.0))
    }

    /// Vector-Jacobian product: propagates `seed` (shaped like `output`) back to
    /// every parameter.
    pub fn backward_seeded(&self, output: NodeId, seed: Matrix) -> Result<Gradients> {
        self.check(output)?;
        if seed.shape() != self.value(output).shape() {
            return Err(Error::dim("backward seed", seed.shape(), self.value(output).shape()));
        }
        let mut adj: Vec<Option<Matrix>> = (0..=output.0).map(|_| None).collect();
        adj[output.0] = Some(seed);

        for idx in (0..=output.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    adj[idx] = Some(g);
                }
                Op::Affine { input, weight, bias } => {
                    let x = self.value(*input);
                    let w = self.value(*weight);
                    let (i_dim, o_dim) = w.shape();
                    let mut dx = Matrix::zeros(x.rows(), i_dim);
                    let mut dw = Matrix::zeros(i_dim, o_dim);
                    let mut db = Matrix::zeros(1, o_dim);
                    for r in 0..x.rows() {
                        let gr = g.row(r);
                        if gr.iter().all(|v| *v == 0.0) {
                            continue;
                        }
                        let xr = x.row(r);
                        for (dbv, gv) in db.data_mut().iter_mut().zip(gr) {
                            *dbv += gv;
                        }
                        for (k, &xk) in xr.iter().enumerate() {
                            let wrow = w.row(k);
                            dx[(r, k)] = crate::matrix::dot(gr, wrow);
                            if xk != 0.0 {
                                for (d, gv) in dw.row_mut(k).iter_mut().zip(gr) {
                                    *d += xk * gv;
                                }
                            }
                        }
                    }
                    accumulate(&mut adj, *input, dx);
                    accumulate(&mut adj, *weight, dw);
                    accumulate(&mut adj, *bias, db);
                }
                Op::Rational { input, coeffs, template } => {
                    let x = self.value(*input);
                    let k = template.trainable_len();
                    let mut dx = Matrix::zeros(x.rows(), x.cols());
                    let mut dc = vec![0.0; k];
                    let mut buf = vec![0.0; k];
                    for ((xv, gv), dxv) in x.data().iter().zip(g.data()).zip(dx.data_mut()) {
                        if *gv == 0.0 {
                            continue;
                        }
                        let (_, dfdx) = template.eval_with_grad(*xv, Some(&mut buf));
                        *dxv = gv * dfdx;
                        for (d, b) in dc.iter_mut().zip(&buf) {
                            *d += gv * b;
                        }
                    }
                    accumulate(&mut adj, *input, dx);
                    accumulate(&mut adj, *coeffs, Matrix::row_vector(&dc));
                }
                Op::Relu { input } => {
                    let x = self.value(*input);
                    let mut dx = g;
                    for (d, xv) in dx.data_mut().iter_mut().zip(x.data()) {
                        if *xv <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut adj, *input, dx);
                }
                Op::LeakyRelu { input, slope } => {
                    let x = self.value(*input);
                    let mut dx = g;
                    for (d, xv) in dx.data_mut().iter_mut().zip(x.data()) {
                        if *xv <= 0.0 {
                            *d *= slope;
                        }
                    }
                    accumulate(&mut adj, *input, dx);
                }
                Op::LayerNorm {
                    input,
                    gain,
                    shift,
                    normalized,
                    inv_std,
                } => {
                    let gamma = self.value(*gain).data();
                    let (rows, cols) = normalized.shape();
                    let mut dx = Matrix::zeros(rows, cols);
                    let mut dgain = Matrix::zeros(1, cols);
                    let mut dshift = Matrix::zeros(1, cols);
                    let mut dxh = vec![0.0; cols];
                    for r in 0..rows {
                        let gr = g.row(r);
                        if gr.iter().all(|v| *v == 0.0) {
                            continue;
                        }
                        let xh = normalized.row(r);
                        for c in 0..cols {
                            dgain.data_mut()[c] += gr[c] * xh[c];
                            dshift.data_mut()[c] += gr[c];
                            dxh[c] = gr[c] * gamma[c];
                        }
                        let mean_d = dxh.iter().sum::<f64>() / cols as f64;
                        let mean_dx = dxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
                        let dr = dx.row_mut(r);
                        for c in 0..cols {
                            dr[c] = inv_std[r] * (dxh[c] - mean_d - xh[c] * mean_dx);
                        }
                    }
                    accumulate(&mut adj, *input, dx);
                    accumulate(&mut adj, *gain, dgain);
                    accumulate(&mut adj, *shift, dshift);
                }
                Op::RowSum { input } => {
                    let x = self.value(*input);
                    let mut dx = Matrix::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let gv = g[(r, 0)];
                        dx.row_mut(r).iter_mut().for_each(|d| *d = gv);
                    }
                    accumulate(&mut adj, *input, dx);
                }
                Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                    let scale = g[(0, 0)] / probs.rows().max(1) as f64;
                    let mut dz = probs.clone();
                    for (r, &l) in labels.iter().enumerate() {
                        dz[(r, l)] -= 1.0;
                    }
                    dz.scale_in_place(scale);
                    accumulate(&mut adj, *logits, dz);
                }
                Op::Mse { pred, target } => {
                    let p = self.value(*pred);
                    let scale = 2.0 * g[(0, 0)] / p.len().max(1) as f64;
                    let mut dp = p.clone();
                    dp.add_scaled(target, -1.0);
                    dp.scale_in_place(scale);
                    accumulate(&mut adj, *pred, dp);
                }
            }
        }

        let mut grads = BTreeMap::new();
        for &p in &self.params {
            let g = adj
                .get_mut(p.0)
                .and_then(Option::take)
                .unwrap_or_else(|| {
                    let (r, c) = self.value(p).shape();
                    Matrix::zeros(r, c)
                });
            grads.insert(p, g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(adj: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
    match &mut adj[id.0] {
        Some(existing) => existing.add_scaled(&g, 1.0),
        slot @ None => *slot = Some(g),
    }
}

/// Jacobian of a (batch x 1) output with respect to `params`, one row per sample.
/// Columns follow `params` order, each parameter flattened row-major.
pub fn per_sample_jacobian(tape: &Tape, output: NodeId, params: &[NodeId]) -> Result<Matrix> {
    let (rows, cols) = tape.value(output).shape();
    if cols != 1 {
        return Err(Error::Contract(format!(
            "per-sample Jacobian needs one scalar per sample, output is {rows}x{cols}"
        )));
    }
    let total: usize = params.iter().map(|p| tape.value(*p).len()).sum();
    let mut jac = Matrix::zeros(rows, total);
    for i in 0..rows {
        let mut seed = Matrix::zeros(rows, 1);
        seed[(i, 0)] = 1.0;
        let grads = tape.backward_seeded(output, seed)?;
        let row = jac.row_mut(i);
        let mut off = 0;
        for p in params {
            let g = grads
                .get(*p)
                .ok_or_else(|| Error::Contract(format!("node {} is not a parameter", p.0)))?;
            row[off..off + g.len()].copy_from_slice(g.data());
            off += g.len();
        }
    }
    Ok(jac)
}
