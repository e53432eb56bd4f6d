//! Multilayer perceptrons with per-layer trainable activations.
//!
//! Each hidden layer is `affine -> [layer norm] -> activation`; the output layer
//! is affine only. A rational activation owns one coefficient vector per layer,
//! shared by all neurons of that layer and trained with the rest of the network.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagRecord;
use crate::error::{Error, Result};
use crate::gradcore::{per_sample_jacobian, AdamConfig, AdamState, NodeId, Tape};
use crate::matrix::Matrix;
use crate::rational::RationalParams;
use crate::seed;

/// Layer-norm variance floor.
pub const LAYER_NORM_EPS: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActivationKind {
    Relu,
    LeakyRelu { slope: f64 },
    Rational { init: RationalParams },
}

impl ActivationKind {
    pub fn is_rational(&self) -> bool {
        matches!(self, ActivationKind::Rational { .. })
    }

    pub fn label(&self) -> String {
        match self {
            ActivationKind::Relu => "relu".into(),
            ActivationKind::LeakyRelu { .. } => "leaky_relu".into(),
            ActivationKind::Rational { init } => format!(
                "rational_{}_{}_{}",
                if init.variant().is_constrained() { "cr" } else { "or" },
                init.numerator_degree(),
                init.denominator_degree()
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightInit {
    /// Uniform with fan-in scaling: gain `sqrt(2)` for hidden layers, 1 for the output.
    #[default]
    KaimingUniform,
    /// Orthogonal matrices with the same gains.
    Orthogonal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    /// Input width, hidden widths, output width.
    pub widths: Vec<usize>,
    /// One activation per hidden layer.
    pub activations: Vec<ActivationKind>,
    #[serde(default)]
    pub layer_norm: bool,
    #[serde(default)]
    pub init: WeightInit,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl MlpSpec {
    /// Same activation on every hidden layer.
    pub fn uniform(widths: Vec<usize>, activation: ActivationKind, seed: u64) -> Self {
        let hidden = widths.len().saturating_sub(2);
        MlpSpec {
            widths,
            activations: vec![activation; hidden],
            layer_norm: false,
            init: WeightInit::default(),
            seed,
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 3 {
            return Err(Error::Config(format!(
                "an MLP needs input, >= 1 hidden and output widths, got {:?}",
                self.widths
            )));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!("layer widths must be positive: {:?}", self.widths)));
        }
        if self.activations.len() != self.widths.len() - 2 {
            return Err(Error::Config(format!(
                "{} hidden layers but {} activations",
                self.widths.len() - 2,
                self.activations.len()
            )));
        }
        for a in &self.activations {
            match a {
                ActivationKind::Rational { init } => init.validate()?,
                ActivationKind::LeakyRelu { slope } if !slope.is_finite() => {
                    return Err(Error::Config("leaky ReLU slope must be finite".into()))
                }
                _ => {}
            }
        }
        self.adam.validate()
    }

    pub fn hidden_layers(&self) -> usize {
        self.widths.len() - 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    Bias,
    LayerNormGain,
    LayerNormShift,
    /// Trainable coefficients of a rational activation.
    Coefficients,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub layer: usize,
    pub value: Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct LayerSlots {
    weight: usize,
    bias: usize,
    norm: Option<(usize, usize)>,
    coeffs: Option<usize>,
}

/// When a training loop fully resets its network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ResetPolicy {
    Never,
    /// Reset after every `steps` optimizer steps.
    Every { steps: u64 },
    /// `count` resets spaced evenly over the run.
    Evenly { count: u64 },
}

impl Default for ResetPolicy {
    fn default() -> Self {
        ResetPolicy::Evenly { count: 4 }
    }
}

impl ResetPolicy {
    /// Whether to reset after completing step `step` (1-based) of `total`.
    pub fn fires(&self, step: u64, total: u64) -> bool {
        match *self {
            ResetPolicy::Never => false,
            ResetPolicy::Every { steps } => steps > 0 && step % steps == 0 && step < total,
            ResetPolicy::Evenly { count } => {
                if count == 0 || step >= total {
                    return false;
                }
                // Reset k fires at the first step reaching k * total / (count + 1).
                let before = (step - 1) * (count + 1) / total;
                let after = step * (count + 1) / total;
                after > before && after <= count
            }
        }
    }
}

/// Training objective for [`Mlp::train_step`].
#[derive(Clone, Copy, Debug)]
pub enum Loss<'a> {
    CrossEntropy(&'a [usize]),
    Mse(&'a Matrix),
}

/// Node handles for one hidden layer of a forward pass.
#[derive(Clone, Copy, Debug)]
pub struct LayerNodes {
    pub affine: NodeId,
    pub normalized: Option<NodeId>,
    /// Input of the activation (after layer norm when enabled).
    pub activation_input: NodeId,
    pub activation_output: NodeId,
}

/// A forward pass on a fresh tape.
#[derive(Debug)]
pub struct Forward {
    pub tape: Tape,
    pub output: NodeId,
    /// Tape nodes of the network parameters, in [`Mlp::params`] order.
    pub param_nodes: Vec<NodeId>,
    pub layers: Vec<LayerNodes>,
}

impl Forward {
    pub fn output(&self) -> &Matrix {
        self.tape.value(self.output)
    }

    /// Values fed to the activation of hidden layer `layer`.
    pub fn preactivations(&self, layer: usize) -> &Matrix {
        self.tape.value(self.layers[layer].activation_input)
    }

    /// Layer-normalized values before the trainable gain and shift.
    pub fn normalized(&self, layer: usize) -> Option<&Matrix> {
        self.layers[layer]
            .normalized
            .and_then(|id| self.tape.layer_norm_normalized(id))
    }

    pub fn activations(&self, layer: usize) -> &Matrix {
        self.tape.value(self.layers[layer].activation_output)
    }
}

/// Result of one optimizer step.
#[derive(Debug)]
pub struct StepReport {
    pub loss: f64,
    /// Euclidean norm of the gradient over all activation coefficients.
    pub coeff_grad_norm: f64,
    /// Euclidean norm of the gradient over weight matrices.
    pub weight_grad_norm: f64,
    /// The forward pass the step was computed from.
    pub forward: Forward,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<Param>,
    slots: Vec<LayerSlots>,
    adam: AdamState,
    steps: u64,
    resets: u64,
}

impl Mlp {
    pub fn build(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let (params, slots) = init_params(&spec, seed::derive(spec.seed, seed::STREAM_INIT));
        let adam = AdamState::new(spec.adam, params.iter().map(|p| p.value.shape()))?;
        Ok(Mlp {
            spec,
            params,
            slots,
            adam,
            steps: 0,
            resets: 0,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn set_learning_rate(&mut self, lr: f64) -> Result<()> {
        let mut cfg = self.adam.config;
        cfg.lr = lr;
        cfg.validate()?;
        self.adam.config = cfg;
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn resets(&self) -> u64 {
        self.resets
    }

    pub fn input_width(&self) -> usize {
        self.spec.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.spec.widths.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn coefficient_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.kind == ParamKind::Coefficients)
            .map(|p| p.value.len())
            .sum()
    }

    /// Current rational of each hidden layer (`None` for fixed activations).
    pub fn rationals(&self) -> Vec<Option<RationalParams>> {
        self.spec
            .activations
            .iter()
            .zip(&self.slots)
            .map(|(act, slot)| match (act, slot.coeffs) {
                (ActivationKind::Rational { init }, Some(i)) => {
                    let mut p = init.clone();
                    p.set_trainable_unchecked(self.params[i].value.data());
                    Some(p)
                }
                _ => None,
            })
            .collect()
    }

    /// Overwrites the coefficients of a rational hidden layer.
    pub fn set_rational(&mut self, layer: usize, params: &RationalParams) -> Result<()> {
        let slot = self
            .slots
            .get(layer)
            .and_then(|s| s.coeffs)
            .ok_or_else(|| Error::Contract(format!("layer {layer} has no rational activation")))?;
        let v = &mut self.params[slot].value;
        if v.len() != params.trainable_len() {
            return Err(Error::dim("set_rational", v.shape(), (1, params.trainable_len())));
        }
        v.data_mut().copy_from_slice(&params.trainable());
        Ok(())
    }

    pub fn forward(&self, batch: &Matrix) -> Result<Forward> {
        if batch.cols() != self.input_width() {
            return Err(Error::dim("mlp forward", batch.shape(), (batch.rows(), self.input_width())));
        }
        let mut tape = Tape::new();
        let param_nodes: Vec<NodeId> = self.params.iter().map(|p| tape.param(p.value.clone())).collect();
        let mut h = tape.leaf(batch.clone());
        let mut layers = Vec::with_capacity(self.spec.hidden_layers());
        let hidden = self.spec.hidden_layers();
        for (l, slot) in self.slots.iter().enumerate() {
            let affine = tape.affine(h, param_nodes[slot.weight], param_nodes[slot.bias])?;
            if l == hidden {
                h = affine;
                break;
            }
            let mut normalized = None;
            let act_in = match slot.norm {
                Some((g, s)) => {
                    let id = tape.layer_norm(affine, param_nodes[g], param_nodes[s], LAYER_NORM_EPS)?;
                    normalized = Some(id);
                    id
                }
                None => affine,
            };
            let act_out = match &self.spec.activations[l] {
                ActivationKind::Relu => tape.relu(act_in)?,
                ActivationKind::LeakyRelu { slope } => tape.leaky_relu(act_in, *slope)?,
                ActivationKind::Rational { init } => {
                    let c = slot.coeffs.expect("rational layer has coefficients");
                    tape.rational(act_in, param_nodes[c], init)?
                }
            };
            layers.push(LayerNodes {
                affine,
                normalized,
                activation_input: act_in,
                activation_output: act_out,
            });
            h = act_out;
        }
        Ok(Forward {
            tape,
            output: h,
            param_nodes,
            layers,
        })
    }

    /// Network output for `batch`.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        let f = self.forward(batch)?;
        Ok(f.tape.value(f.output).clone())
    }

    /// One backward pass and Adam step. `coeff_decay` is decoupled weight decay
    /// applied to rational coefficients only.
    pub fn train_step(&mut self, batch: &Matrix, loss: Loss<'_>, coeff_decay: f64) -> Result<StepReport> {
        if !(coeff_decay >= 0.0 && coeff_decay.is_finite()) {
            return Err(Error::Config(format!("coefficient decay must be >= 0, got {coeff_decay}")));
        }
        let mut fwd = self.forward(batch)?;
        let loss_node = match loss {
            Loss::CrossEntropy(labels) => fwd.tape.softmax_cross_entropy(fwd.output, labels)?,
            Loss::Mse(target) => fwd.tape.mse_loss(fwd.output, target)?,
        };
        let loss_value = fwd.tape.value(loss_node)[(0, 0)];
        if !loss_value.is_finite() {
            let snapshot = DiagRecord::from_forward(self.steps, loss_value, &fwd, self, 0.0, 0.0);
            return Err(Error::Explosion {
                reason: format!("non-finite loss {loss_value} at step {}", self.steps),
                snapshot: Some(Box::new(snapshot)),
            });
        }
        let grads = fwd.tape.backward(loss_node)?;
        let grad_refs: Vec<&Matrix> = fwd.param_nodes.iter().map(|id| grads.of(*id)).collect();

        let mut coeff_sq = 0.0;
        let mut weight_sq = 0.0;
        for (p, g) in self.params.iter().zip(&grad_refs) {
            let sq: f64 = g.data().iter().map(|v| v * v).sum();
            match p.kind {
                ParamKind::Coefficients => coeff_sq += sq,
                ParamKind::Weight => weight_sq += sq,
                _ => {}
            }
        }
        if !(coeff_sq.is_finite() && weight_sq.is_finite()) {
            let snapshot = DiagRecord::from_forward(self.steps, loss_value, &fwd, self, coeff_sq.sqrt(), weight_sq.sqrt());
            return Err(Error::Explosion {
                reason: format!("non-finite gradient at step {}", self.steps),
                snapshot: Some(Box::new(snapshot)),
            });
        }

        let decay: Vec<f64> = self
            .params
            .iter()
            .map(|p| if p.kind == ParamKind::Coefficients { coeff_decay } else { 0.0 })
            .collect();
        let mut values: Vec<Matrix> = self.params.iter().map(|p| p.value.clone()).collect();
        self.adam.step(&mut values, &grad_refs, &decay)?;
        for (p, v) in self.params.iter_mut().zip(values) {
            p.value = v;
        }
        self.steps += 1;
        Ok(StepReport {
            loss: loss_value,
            coeff_grad_norm: coeff_sq.sqrt(),
            weight_grad_norm: weight_sq.sqrt(),
            forward: fwd,
        })
    }

    /// Redraws every parameter and clears the optimizer. Each reset uses a fresh
    /// seed derived from the spec seed and the reset count; the step counter is kept.
    pub fn reset(&mut self) {
        self.resets += 1;
        let s = seed::derive(self.spec.seed, seed::STREAM_RESET + self.resets);
        let (params, slots) = init_params(&self.spec, s);
        self.params = params;
        self.slots = slots;
        self.adam.reset();
    }

    /// `self <- tau * online + (1 - tau) * self` over all parameters.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        if self.params.len() != online.params.len() {
            return Err(Error::Contract("Polyak update between different architectures".into()));
        }
        for (t, o) in self.params.iter_mut().zip(&online.params) {
            if t.value.shape() != o.value.shape() {
                return Err(Error::dim("soft_update", t.value.shape(), o.value.shape()));
            }
            for (tv, ov) in t.value.data_mut().iter_mut().zip(o.value.data()) {
                *tv = tau * ov + (1.0 - tau) * *tv;
            }
        }
        Ok(())
    }

    /// Copies parameter values (not optimizer state) from `other`.
    pub fn copy_params_from(&mut self, other: &Mlp) -> Result<()> {
        self.soft_update_from(other, 1.0)
    }

    /// Per-sample Jacobian of the summed outputs with respect to every parameter,
    /// activation coefficients included. Shape: batch x [`Mlp::param_count`].
    pub fn per_sample_jacobian(&self, batch: &Matrix) -> Result<Matrix> {
        let mut fwd = self.forward(batch)?;
        let out = if self.output_width() == 1 {
            fwd.output
        } else {
            fwd.tape.row_sum(fwd.output)?
        };
        per_sample_jacobian(&fwd.tape, out, &fwd.param_nodes)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            spec: self.spec.clone(),
            steps: self.steps,
            resets: self.resets,
            params: self
                .params
                .iter()
                .map(|p| NamedArray {
                    name: p.name.clone(),
                    rows: p.value.rows(),
                    cols: p.value.cols(),
                    data: p.value.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut net = Mlp::build(ck.spec.clone())?;
        if ck.params.len() != net.params.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} arrays, architecture needs {}",
                ck.params.len(),
                net.params.len()
            )));
        }
        for (p, a) in net.params.iter_mut().zip(&ck.params) {
            if p.name != a.name || p.value.shape() != (a.rows, a.cols) {
                return Err(Error::Format(format!("checkpoint array `{}` does not match `{}`", a.name, p.name)));
            }
            p.value = Matrix::from_vec(a.rows, a.cols, a.data.clone())?;
        }
        net.steps = ck.steps;
        net.resets = ck.resets;
        Ok(net)
    }
}

/// Flat JSON-serializable snapshot of a network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub spec: MlpSpec,
    pub steps: u64,
    pub resets: u64,
    pub params: Vec<NamedArray>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedArray {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

fn init_params(spec: &MlpSpec, seed: u64) -> (Vec<Param>, Vec<LayerSlots>) {
    let mut rng = seed::rng(seed);
    let mut params = Vec::new();
    let mut slots = Vec::new();
    let hidden = spec.hidden_layers();
    for l in 0..=hidden {
        let (fan_in, fan_out) = (spec.widths[l], spec.widths[l + 1]);
        let gain = if l < hidden { 2f64.sqrt() } else { 1.0 };
        let w = match spec.init {
            WeightInit::KaimingUniform => {
                let bound = gain * (3.0 / fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Matrix::from_vec(fan_in, fan_out, data).expect("sized")
            }
            WeightInit::Orthogonal => orthogonal(fan_in, fan_out, gain, &mut rng),
        };
        let weight = params.len();
        params.push(Param {
            name: format!("l{l}.weight"),
            kind: ParamKind::Weight,
            layer: l,
            value: w,
        });
        let bias = params.len();
        params.push(Param {
            name: format!("l{l}.bias"),
            kind: ParamKind::Bias,
            layer: l,
            value: Matrix::zeros(1, fan_out),
        });
        let mut slot = LayerSlots {
            weight,
            bias,
            norm: None,
            coeffs: None,
        };
        if l < hidden {
            if spec.layer_norm {
                let g = params.len();
                params.push(Param {
                    name: format!("l{l}.ln_gain"),
                    kind: ParamKind::LayerNormGain,
                    layer: l,
                    value: Matrix::filled(1, fan_out, 1.0),
                });
                params.push(Param {
                    name: format!("l{l}.ln_shift"),
                    kind: ParamKind::LayerNormShift,
                    layer: l,
                    value: Matrix::zeros(1, fan_out),
                });
                slot.norm = Some((g, g + 1));
            }
            if let ActivationKind::Rational { init } = &spec.activations[l] {
                slot.coeffs = Some(params.len());
                params.push(Param {
                    name: format!("l{l}.rational"),
                    kind: ParamKind::Coefficients,
                    layer: l,
                    value: Matrix::row_vector(&init.trainable()),
                });
            }
        }
        slots.push(slot);
    }
    (params, slots)
}

fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut seed::Rng) -> Matrix {
    let (big, small) = (rows.max(cols), rows.min(cols));
    let g = DMatrix::<f64>::from_fn(big, small, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut out = Matrix::zeros(rows, cols);
    for i in 0..big {
        for j in 0..small {
            // Sign fix makes the distribution uniform over orthogonal matrices.
            let s = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
            let v = gain * s * q[(i, j)];
            if rows >= cols {
                out[(i, j)] = v;
            } else {
                out[(j, i)] = v;
            }
        }
    }
    out
}

/// Index of the largest entry of each row.
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|r| {
            let row = m.row(r);
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
