//! Feedforward classifier over a flat parameter vector.
//!
//! Parameters are laid out layer by layer: the weight matrix of a layer in
//! row-major `(out, in)` order, followed by its `out` biases. Hidden layers use
//! the configured activation, the output layer feeds a softmax and the loss is
//! the mean cross-entropy over the batch.

use std::ops::{Deref, DerefMut};

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_len, Error, Result};

/// Rows per chunk when a whole dataset is pushed through the network.
const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|x| if x > 0.0 { x } else { 0.0 }),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
        }
    }

    /// Derivative expressed through the activation output `a = act(z)`.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Architecture of the classifier: `[input, hidden..., classes]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub layer_sizes: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

/// Location of one dense layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Offset of the first weight.
    pub offset: usize,
}

impl LayerShape {
    pub fn weight_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    pub fn bias_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.fan_in * self.fan_out;
        start..start + self.fan_out
    }
}

impl ModelSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        let spec = ModelSpec {
            layer_sizes,
            activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 layer sizes, got {}",
                self.layer_sizes.len()
            )));
        }
        if let Some(i) = self.layer_sizes.iter().position(|&n| n == 0) {
            return Err(Error::InvalidSpec(format!("layer_sizes[{i}] is zero")));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn classes(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }

    /// Total parameter count `P = Σ (in_i + 1) · out_i`.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let shape = LayerShape {
                    fan_in: w[0],
                    fan_out: w[1],
                    offset,
                };
                offset += (w[0] + 1) * w[1];
                shape
            })
            .collect()
    }
}

/// Flat vector of model parameters (θ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        ParamVector(values)
    }
}

/// A minibatch: `B × D` inputs with one class label per row.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub inputs: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
}

impl<'a> Batch<'a> {
    pub fn new(inputs: ArrayView2<'a, f64>, labels: &'a [usize]) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        check_len("batch labels", inputs.nrows(), labels.len())?;
        Ok(Batch { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        check_len("batch labels", self.inputs.nrows(), self.labels.len())?;
        check_len("input dimension", spec.input_dim(), self.inputs.ncols())?;
        let classes = spec.classes();
        if let Some(&label) = self.labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        Ok(())
    }
}

/// Uniform `±1/√fan_in` weights and zero biases, drawn from a seeded stream.
pub fn param_init(spec: &ModelSpec, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = ParamVector::zeros(spec.param_count());
    for layer in spec.layers() {
        let bound = 1.0 / (layer.fan_in as f64).sqrt();
        for w in &mut theta[layer.weight_range()] {
            *w = rng.random_range(-bound..bound);
        }
    }
    theta
}

fn weights<'a>(theta: &'a [f64], layer: &LayerShape) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((layer.fan_out, layer.fan_in), &theta[layer.weight_range()])
        .expect("layer view matches layout")
}

fn biases<'a>(theta: &'a [f64], layer: &LayerShape) -> ArrayView1<'a, f64> {
    ArrayView1::from(&theta[layer.bias_range()])
}

fn check_params(spec: &ModelSpec, theta: &[f64]) -> Result<()> {
    check_len("parameter vector", spec.param_count(), theta.len())
}

/// Activations kept from a forward pass: `hidden[l]` is the output of hidden
/// layer `l`, `logits` the pre-softmax output.
struct Trace {
    hidden: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

fn forward_trace(spec: &ModelSpec, theta: &[f64], inputs: ArrayView2<'_, f64>) -> Trace {
    let layers = spec.layers();
    let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(layers.len() - 1);
    let mut logits = None;
    for (l, layer) in layers.iter().enumerate() {
        let prev = if l == 0 { inputs } else { hidden[l - 1].view() };
        let mut z = Array2::<f64>::zeros((prev.nrows(), layer.fan_out));
        general_mat_mul(1.0, &prev, &weights(theta, layer).t(), 0.0, &mut z);
        z += &biases(theta, layer);
        if l + 1 < layers.len() {
            spec.activation.apply(&mut z);
            hidden.push(z);
        } else {
            logits = Some(z);
        }
    }
    Trace {
        hidden,
        logits: logits.expect("at least one layer"),
    }
}

/// Softmax of the logits minus the one-hot labels, row by row, plus the summed
/// cross-entropy. Uses the max-shifted log-sum-exp.
fn softmax_residual(logits: &Array2<f64>, labels: &[usize]) -> (Array2<f64>, f64) {
    let mut residual = logits.clone();
    let mut loss_sum = 0.0;
    for (mut row, &label) in residual.rows_mut().into_iter().zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let shifted_label = row[label] - max;
        let mut norm = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            norm += *x;
        }
        loss_sum += norm.ln() - shifted_label;
        row.mapv_inplace(|x| x / norm);
        row[label] -= 1.0;
    }
    (residual, loss_sum)
}

/// Per-sample error signals at every layer: `deltas[l]` is `∂ℓ_n/∂z_l` for each
/// row `n` (not divided by the batch size), paired with the layer's input.
pub(crate) struct Backprop<'a> {
    pub inputs: ArrayView2<'a, f64>,
    pub hidden: Vec<Array2<f64>>,
    pub deltas: Vec<Array2<f64>>,
    pub loss_sum: f64,
}

impl Backprop<'_> {
    /// Input activations of layer `l`.
    pub fn layer_input(&self, l: usize) -> ArrayView2<'_, f64> {
        if l == 0 {
            self.inputs
        } else {
            self.hidden[l - 1].view()
        }
    }
}

pub(crate) fn backprop<'a>(spec: &ModelSpec, theta: &[f64], batch: Batch<'a>) -> Backprop<'a> {
    let layers = spec.layers();
    let trace = forward_trace(spec, theta, batch.inputs);
    let (mut delta, loss_sum) = softmax_residual(&trace.logits, batch.labels);
    let mut deltas = vec![Array2::<f64>::zeros((0, 0)); layers.len()];
    for l in (0..layers.len()).rev() {
        if l == 0 {
            deltas[0] = delta;
            break;
        }
        let w = weights(theta, &layers[l]);
        let mut back = delta.dot(&w);
        let act = spec.activation;
        back.zip_mut_with(&trace.hidden[l - 1], |d, &a| {
            *d *= act.derivative_from_output(a)
        });
        deltas[l] = std::mem::replace(&mut delta, back);
    }
    Backprop {
        inputs: batch.inputs,
        hidden: trace.hidden,
        deltas,
        loss_sum,
    }
}

/// Logits and mean cross-entropy of the batch.
pub fn forward(spec: &ModelSpec, theta: &ParamVector, batch: Batch<'_>) -> Result<(Array2<f64>, f64)> {
    check_params(spec, theta)?;
    batch.validate(spec)?;
    let trace = forward_trace(spec, theta, batch.inputs);
    let loss_sum: f64 = trace
        .logits
        .rows()
        .into_iter()
        .zip(batch.labels)
        .map(|(row, &label)| log_sum_exp(row) - row[label])
        .sum();
    Ok((trace.logits, loss_sum / batch.len() as f64))
}

fn log_sum_exp(row: ArrayView1<'_, f64>) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Gradient of the mean cross-entropy with respect to θ.
pub fn backward(spec: &ModelSpec, theta: &ParamVector, batch: Batch<'_>) -> Result<ParamVector> {
    Ok(loss_and_grad(spec, theta, batch)?.1)
}

/// Mean loss and its gradient from a single forward/backward sweep.
pub fn loss_and_grad(
    spec: &ModelSpec,
    theta: &ParamVector,
    batch: Batch<'_>,
) -> Result<(f64, ParamVector)> {
    check_params(spec, theta)?;
    batch.validate(spec)?;
    let bp = backprop(spec, theta, batch);
    let scale = 1.0 / batch.len() as f64;
    let mut grad = ParamVector::zeros(theta.len());
    for (l, layer) in spec.layers().iter().enumerate() {
        let delta = &bp.deltas[l];
        let input = bp.layer_input(l);
        let mut gw = ArrayViewMut2::from_shape(
            (layer.fan_out, layer.fan_in),
            &mut grad[layer.weight_range()],
        )
        .expect("layer view matches layout");
        general_mat_mul(scale, &delta.t(), &input, 0.0, &mut gw);
        let gb: Array1<f64> = delta.sum_axis(Axis(0));
        for (dst, g) in grad[layer.bias_range()].iter_mut().zip(gb.iter()) {
            *dst = g * scale;
        }
    }
    Ok((bp.loss_sum * scale, grad))
}

/// `θ − η·grad`.
pub fn sgd_step(theta: &ParamVector, grad: &ParamVector, lr: f64) -> Result<ParamVector> {
    let mut next = theta.clone();
    sgd_step_in_place(&mut next, grad, lr)?;
    Ok(next)
}

pub fn sgd_step_in_place(theta: &mut ParamVector, grad: &ParamVector, lr: f64) -> Result<()> {
    check_len("gradient", theta.len(), grad.len())?;
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::arg("learning_rate", format!("must be finite and >= 0, got {lr}")));
    }
    for (t, g) in theta.iter_mut().zip(grad.iter()) {
        *t -= lr * g;
    }
    Ok(())
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of samples whose argmax logit equals the label.
pub fn evaluate(spec: &ModelSpec, theta: &ParamVector, dataset: &Dataset) -> Result<f64> {
    check_params(spec, theta)?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for start in (0..dataset.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(dataset.len());
        let batch = dataset.slice(start, end);
        batch.validate(spec)?;
        let trace = forward_trace(spec, theta, batch.inputs);
        correct += trace
            .logits
            .rows()
            .into_iter()
            .zip(batch.labels)
            .filter(|(row, &label)| argmax(row.view()) == label)
            .count();
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Mean cross-entropy over a whole dataset, accumulated chunk by chunk in row order.
pub fn dataset_loss(spec: &ModelSpec, theta: &ParamVector, dataset: &Dataset) -> Result<f64> {
    Ok(dataset_loss_sum(spec, theta, dataset)? / dataset.len() as f64)
}

pub(crate) fn dataset_loss_sum(spec: &ModelSpec, theta: &ParamVector, dataset: &Dataset) -> Result<f64> {
    check_params(spec, theta)?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sum = 0.0;
    for start in (0..dataset.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(dataset.len());
        let batch = dataset.slice(start, end);
        batch.validate(spec)?;
        let trace = forward_trace(spec, theta, batch.inputs);
        sum += trace
            .logits
            .rows()
            .into_iter()
            .zip(batch.labels)
            .map(|(row, &label)| log_sum_exp(row) - row[label])
            .sum::<f64>();
    }
    Ok(sum)
}
