//! A small fully connected network with hand-written forward and backward
//! passes, the base losses, and Adam.
//!
//! Parameters live in one flat vector. For each layer, in order, the weight
//! matrix is stored row-major as `output_dim x input_dim` (so
//! `z = W a + b`), followed by the `output_dim` biases. Gradients and Adam
//! moments share that layout, and so does the checkpoint file.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;
use crate::tensor::{softmax_in_place, Matrix, ShapeError, Targets, Task};

/// Probabilities are clamped to `[CE_CLAMP, 1]` before taking the log.
pub const CE_CLAMP: f64 = 1e-12;

pub const CHECKPOINT_FORMAT: &str = "saifdl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("{0}")]
    Domain(String),
    #[error("stale forward cache: {0}")]
    State(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    // ReLU'(0) = 0.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        LayerSpec {
            input_dim,
            output_dim,
            activation,
        }
    }

    fn param_count(&self) -> usize {
        self.output_dim * self.input_dim + self.output_dim
    }
}

/// The two-input, ten-hidden-unit ReLU network with a linear head.
pub fn default_architecture(input_dim: usize, output_dim: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(input_dim, 10, Activation::Relu),
        LayerSpec::new(10, output_dim, Activation::Identity),
    ]
}

fn check_specs(specs: &[LayerSpec]) -> Result<(), ShapeError> {
    if specs.is_empty() {
        return Err(ShapeError("a network needs at least one layer".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.input_dim == 0 || s.output_dim == 0 {
            return Err(ShapeError(format!("layer {i} has a zero dimension")));
        }
    }
    for (i, pair) in specs.windows(2).enumerate() {
        if pair[0].output_dim != pair[1].input_dim {
            return Err(ShapeError(format!(
                "layer {i} outputs {} values but layer {} expects {}",
                pair[0].output_dim,
                i + 1,
                pair[1].input_dim
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<LayerSpec>,
    task: Task,
    params: Vec<f64>,
    // Bumped on every parameter update; forward caches remember it.
    version: u64,
}

/// Glorot-uniform weights and zero biases, drawn from the pinned generator.
///
/// Weights are drawn layer by layer in storage order as
/// `(2u - 1) * sqrt(6 / (fan_in + fan_out))` with `u = Rng::uniform()`.
pub fn init_network(specs: &[LayerSpec], task: Task, seed: u64) -> Result<Network, NnError> {
    check_specs(specs)?;
    let mut rng = Rng::new(seed);
    let mut params = Vec::with_capacity(specs.iter().map(LayerSpec::param_count).sum());
    for s in specs {
        let limit = (6.0 / (s.input_dim + s.output_dim) as f64).sqrt();
        for _ in 0..s.input_dim * s.output_dim {
            params.push((2.0 * rng.uniform() - 1.0) * limit);
        }
        params.extend(std::iter::repeat_n(0.0, s.output_dim));
    }
    Ok(Network {
        layers: specs.to_vec(),
        task,
        params,
        version: 0,
    })
}

impl Network {
    /// Builds a network from explicit parameters in the flat layout.
    pub fn from_parameters(
        specs: &[LayerSpec],
        task: Task,
        params: Vec<f64>,
    ) -> Result<Self, NnError> {
        check_specs(specs)?;
        let expected: usize = specs.iter().map(LayerSpec::param_count).sum();
        if params.len() != expected {
            return Err(ShapeError(format!(
                "{} parameters given, architecture needs {expected}",
                params.len()
            ))
            .into());
        }
        Ok(Network {
            layers: specs.to_vec(),
            task,
            params,
            version: 0,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access to the flat parameters. Invalidates earlier forward caches.
    pub fn parameters_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    fn layer_params(&self, l: usize) -> (&[f64], &[f64]) {
        let offset: usize = self.layers[..l].iter().map(LayerSpec::param_count).sum();
        let s = self.layers[l];
        let w = &self.params[offset..offset + s.output_dim * s.input_dim];
        let b = &self.params[offset + s.output_dim * s.input_dim..offset + s.param_count()];
        (w, b)
    }
}

/// What `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    // inputs[l] feeds layer l; inputs[0] is the batch, the last entry is the head input.
    inputs: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
}

impl ForwardCache {
    /// Pre-activations of every layer, in order.
    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre_activations
    }

    /// Output of the last layer before the softmax head (logits for classification).
    pub fn head_input(&self) -> &Matrix {
        self.inputs.last().expect("at least one layer")
    }
}

/// Runs the network on a batch.
///
/// Classification rows are softmax probabilities; regression rows are the
/// raw outputs of the last layer.
pub fn forward(net: &Network, x: &Matrix) -> Result<(Matrix, ForwardCache), NnError> {
    if x.cols() != net.input_dim() {
        return Err(ShapeError(format!(
            "input has {} features, network expects {}",
            x.cols(),
            net.input_dim()
        ))
        .into());
    }
    let batch = x.rows();
    let mut inputs = vec![x.clone()];
    let mut pre_activations = Vec::with_capacity(net.layers.len());
    for (l, spec) in net.layers.iter().enumerate() {
        let (w, b) = net.layer_params(l);
        let a = &inputs[l];
        let mut z = Matrix::zeros(batch, spec.output_dim);
        let mut out = Matrix::zeros(batch, spec.output_dim);
        for r in 0..batch {
            let a_row = a.row(r);
            for j in 0..spec.output_dim {
                let w_row = &w[j * spec.input_dim..(j + 1) * spec.input_dim];
                let mut acc = b[j];
                for (wi, ai) in w_row.iter().zip(a_row) {
                    acc += wi * ai;
                }
                z.set(r, j, acc);
                out.set(r, j, spec.activation.apply(acc));
            }
        }
        pre_activations.push(z);
        inputs.push(out);
    }
    let mut predictions = inputs.last().expect("at least one layer").clone();
    if net.task == Task::Classification {
        for r in 0..batch {
            softmax_in_place(predictions.row_mut(r));
        }
    }
    Ok((
        predictions,
        ForwardCache {
            version: net.version,
            inputs,
            pre_activations,
        },
    ))
}

/// Flat parameter gradient, same layout as [`Network::parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Reverse pass. `output_gradient` is the gradient with respect to the last
/// layer's output, i.e. the logits for classification (see [`base_loss`]
/// and [`softmax_backward`]) and the predictions for regression.
pub fn backward(
    net: &Network,
    cache: &ForwardCache,
    output_gradient: &Matrix,
) -> Result<Gradients, NnError> {
    if cache.version != net.version || cache.pre_activations.len() != net.layers.len() {
        return Err(NnError::State(
            "cache does not come from the current parameters of this network".into(),
        ));
    }
    let batch = cache.inputs[0].rows();
    output_gradient.ensure_shape(batch, net.output_dim(), "output gradient")?;
    let mut grads = vec![0.0; net.params.len()];
    let mut upstream = output_gradient.clone();
    let mut offset = net.params.len();
    for l in (0..net.layers.len()).rev() {
        let spec = net.layers[l];
        offset -= spec.param_count();
        let (w, _) = net.layer_params(l);
        let z = &cache.pre_activations[l];
        let a = &cache.inputs[l];
        let mut dz = Matrix::zeros(batch, spec.output_dim);
        for r in 0..batch {
            for j in 0..spec.output_dim {
                dz.set(
                    r,
                    j,
                    upstream.get(r, j) * spec.activation.derivative(z.get(r, j)),
                );
            }
        }
        let (gw, gb) = grads[offset..offset + spec.param_count()]
            .split_at_mut(spec.output_dim * spec.input_dim);
        for r in 0..batch {
            let a_row = a.row(r);
            let dz_row = dz.row(r);
            for j in 0..spec.output_dim {
                let d = dz_row[j];
                gb[j] += d;
                let gw_row = &mut gw[j * spec.input_dim..(j + 1) * spec.input_dim];
                for (g, ai) in gw_row.iter_mut().zip(a_row) {
                    *g += d * ai;
                }
            }
        }
        if l > 0 {
            let mut da = Matrix::zeros(batch, spec.input_dim);
            for r in 0..batch {
                let dz_row = dz.row(r);
                let da_row = da.row_mut(r);
                for j in 0..spec.output_dim {
                    let w_row = &w[j * spec.input_dim..(j + 1) * spec.input_dim];
                    for (d, wi) in da_row.iter_mut().zip(w_row) {
                        *d += dz_row[j] * wi;
                    }
                }
            }
            upstream = da;
        }
    }
    Ok(Gradients(grads))
}

/// Pulls a gradient w.r.t. softmax probabilities back to the logits:
/// `g_z = p ⊙ (g_p - <g_p, p>)` row by row.
pub fn softmax_backward(
    probabilities: &Matrix,
    grad_probabilities: &Matrix,
) -> Result<Matrix, ShapeError> {
    grad_probabilities.ensure_shape(
        probabilities.rows(),
        probabilities.cols(),
        "probability gradient",
    )?;
    let mut out = Matrix::zeros(probabilities.rows(), probabilities.cols());
    for r in 0..probabilities.rows() {
        let p = probabilities.row(r);
        let g = grad_probabilities.row(r);
        let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        for (o, (pi, gi)) in out.row_mut(r).iter_mut().zip(p.iter().zip(g)) {
            *o = pi * (gi - dot);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Mse,
    Mae,
}

impl LossKind {
    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Classification => LossKind::CrossEntropy,
            Task::Regression => LossKind::Mse,
        }
    }

    pub fn task(self) -> Task {
        match self {
            LossKind::CrossEntropy => Task::Classification,
            LossKind::Mse | LossKind::Mae => Task::Regression,
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::CrossEntropy => "cross_entropy",
            LossKind::Mse => "mse",
            LossKind::Mae => "mae",
        })
    }
}

/// Mean base loss over the batch and its gradient.
///
/// For `CrossEntropy`, `y_pred` holds probabilities and the returned
/// gradient is the fused softmax-cross-entropy gradient w.r.t. the *logits*,
/// `(p - onehot) / B`. The clamp on `p` is not differentiated. For `Mse` and
/// `Mae` the gradient is w.r.t. `y_pred` itself (`sign(0) = 0` for MAE).
pub fn base_loss(
    kind: LossKind,
    y_true: &Targets,
    y_pred: &Matrix,
) -> Result<(f64, Matrix), NnError> {
    let batch = y_pred.rows();
    if y_true.len() != batch {
        return Err(ShapeError(format!("{} targets for {batch} predictions", y_true.len())).into());
    }
    let inv_b = if batch == 0 { 0.0 } else { 1.0 / batch as f64 };
    let mut grad = Matrix::zeros(batch, y_pred.cols());
    let mut total = 0.0;
    match (kind, y_true) {
        (LossKind::CrossEntropy, Targets::Classes(classes)) => {
            for (r, &c) in classes.iter().enumerate() {
                if c >= y_pred.cols() {
                    return Err(NnError::Domain(format!(
                        "label {c} out of range for {} classes",
                        y_pred.cols()
                    )));
                }
                let p = y_pred.row(r);
                total -= p[c].clamp(CE_CLAMP, 1.0).ln();
                let g = grad.row_mut(r);
                for (gi, pi) in g.iter_mut().zip(p) {
                    *gi = pi * inv_b;
                }
                g[c] -= inv_b;
            }
        }
        (LossKind::Mse | LossKind::Mae, Targets::Values(values)) => {
            if y_pred.cols() != 1 {
                return Err(ShapeError(format!(
                    "regression targets are scalar but predictions have {} columns",
                    y_pred.cols()
                ))
                .into());
            }
            for (r, &y) in values.iter().enumerate() {
                let diff = y_pred.get(r, 0) - y;
                let (loss, slope) = match kind {
                    LossKind::Mse => (diff * diff, 2.0 * diff),
                    _ => (
                        diff.abs(),
                        if diff > 0.0 {
                            1.0
                        } else if diff < 0.0 {
                            -1.0
                        } else {
                            0.0
                        },
                    ),
                };
                total += loss;
                grad.set(r, 0, slope * inv_b);
            }
        }
        (kind, targets) => {
            return Err(NnError::Domain(format!(
                "{kind} loss does not apply to {} targets",
                targets.task()
            )))
        }
    }
    Ok((total * inv_b, grad))
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    beta1_power: f64,
    beta2_power: f64,
}

impl AdamState {
    pub fn new(
        parameter_count: usize,
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Self {
        AdamState {
            step: 0,
            learning_rate,
            beta1,
            beta2,
            epsilon,
            m: vec![0.0; parameter_count],
            v: vec![0.0; parameter_count],
            beta1_power: 1.0,
            beta2_power: 1.0,
        }
    }

    /// `η = 0.01, β1 = 0.9, β2 = 0.999, ε = 1e-8`.
    pub fn with_defaults(parameter_count: usize) -> Self {
        Self::new(parameter_count, 0.01, 0.9, 0.999, 1e-8)
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One update of `params` in place.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), ShapeError> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(ShapeError(format!(
                "Adam state holds {} parameters, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        self.step += 1;
        self.beta1_power *= self.beta1;
        self.beta2_power *= self.beta2;
        let c1 = 1.0 - self.beta1_power;
        let c2 = 1.0 - self.beta2_power;
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Applies one Adam update to `net`.
pub fn adam_step(
    state: &mut AdamState,
    net: &mut Network,
    grad: &Gradients,
) -> Result<(), NnError> {
    state.update(net.parameters_mut(), grad.as_slice())?;
    Ok(())
}

/// On-disk model: a JSON object
/// `{"format": "saifdl-checkpoint", "version": 1, "task": ..., "layers": [...], "parameters": [...]}`
/// where `parameters` is the flat row-major layout described at the top of
/// this module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub task: Task,
    pub layers: Vec<LayerSpec>,
    pub parameters: Vec<f64>,
}

impl Checkpoint {
    pub fn from_network(net: &Network) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            task: net.task,
            layers: net.layers.clone(),
            parameters: net.params.clone(),
        }
    }

    pub fn into_network(self) -> Result<Network, NnError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(NnError::Checkpoint(format!(
                "unknown format `{}`",
                self.format
            )));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported version {}",
                self.version
            )));
        }
        Network::from_parameters(&self.layers, self.task, self.parameters)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialisation cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Network, NnError> {
    Checkpoint::from_json(&std::fs::read_to_string(path)?)?.into_network()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poc_specs() -> Vec<LayerSpec> {
        default_architecture(2, 2)
    }

    #[test]
    fn poc_network_has_52_parameters() {
        let net = init_network(&poc_specs(), Task::Classification, 1).unwrap();
        assert_eq!(net.parameter_count(), 52);
        let limit = (6.0f64 / 12.0).sqrt();
        let (w, b) = net.layer_params(0);
        assert!(w.iter().all(|x| x.abs() <= limit));
        assert!(b.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_network(&poc_specs(), Task::Classification, 42).unwrap();
        let b = init_network(&poc_specs(), Task::Classification, 42).unwrap();
        let c = init_network(&poc_specs(), Task::Classification, 43).unwrap();
        let bits = |n: &Network| {
            n.parameters()
                .iter()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn init_rejects_broken_chains() {
        let specs = [
            LayerSpec::new(2, 10, Activation::Relu),
            LayerSpec::new(5, 2, Activation::Identity),
        ];
        assert!(matches!(
            init_network(&specs, Task::Classification, 0),
            Err(NnError::Shape(_))
        ));
        assert!(init_network(&[], Task::Regression, 0).is_err());
    }

    #[test]
    fn zero_network_predicts_uniform() {
        let net =
            Network::from_parameters(&poc_specs(), Task::Classification, vec![0.0; 52]).unwrap();
        let x = Matrix::from_rows(&[[0.3, 0.9], [5.0, -2.0]]).unwrap();
        let (p, _) = forward(&net, &x).unwrap();
        for row in p.iter_rows() {
            assert_eq!(row, &[0.5, 0.5]);
        }
    }

    #[test]
    fn identity_regression_is_passthrough() {
        let specs = [LayerSpec::new(2, 2, Activation::Identity)];
        let net =
            Network::from_parameters(&specs, Task::Regression, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
                .unwrap();
        let x = Matrix::from_rows(&[[0.25, -3.0], [7.0, 1.5]]).unwrap();
        let (y, _) = forward(&net, &x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = init_network(&poc_specs(), Task::Classification, 0).unwrap();
        assert!(forward(&net, &Matrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn rows_are_independent_of_batch_composition() {
        let net = init_network(&poc_specs(), Task::Classification, 9).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2], [0.7, 0.4], [0.9, 0.95]]).unwrap();
        let (all, _) = forward(&net, &x).unwrap();
        let (one, _) = forward(&net, &x.select_rows(&[2])).unwrap();
        assert_eq!(all.row(2), one.row(0));
    }

    #[test]
    fn cross_entropy_uniform() {
        let p = Matrix::from_rows(&[[0.5, 0.5]]).unwrap();
        let (v, g) = base_loss(LossKind::CrossEntropy, &Targets::Classes(vec![0]), &p).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g.as_slice(), &[-0.5, 0.5]);
        let p = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let (v, _) = base_loss(LossKind::CrossEntropy, &Targets::Classes(vec![1]), &p).unwrap();
        assert!((v - (-(CE_CLAMP.ln()))).abs() < 1e-9);
        assert!(matches!(
            base_loss(LossKind::CrossEntropy, &Targets::Classes(vec![2]), &p),
            Err(NnError::Domain(_))
        ));
    }

    #[test]
    fn mse_and_mae() {
        let y = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let (v, g) = base_loss(LossKind::Mse, &Targets::Values(vec![1.0, 2.0]), &y).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.as_slice().iter().all(|&x| x == 0.0));

        let y = Matrix::from_rows(&[[3.0]]).unwrap();
        let (v, g) = base_loss(LossKind::Mse, &Targets::Values(vec![1.0]), &y).unwrap();
        assert_eq!((v, g.as_slice()[0]), (4.0, 4.0));
        let (v, g) = base_loss(LossKind::Mae, &Targets::Values(vec![1.0]), &y).unwrap();
        assert_eq!((v, g.as_slice()[0]), (2.0, 1.0));

        assert!(base_loss(LossKind::Mse, &Targets::Classes(vec![0]), &y).is_err());
        assert!(base_loss(LossKind::Mse, &Targets::Values(vec![1.0, 2.0]), &y).is_err());
    }

    #[test]
    fn backward_of_zero_gradient_is_zero() {
        let net = init_network(&poc_specs(), Task::Classification, 5).unwrap();
        let x = Matrix::from_rows(&[[0.3, 0.6], [0.8, 0.1]]).unwrap();
        let (_, cache) = forward(&net, &x).unwrap();
        let g = backward(&net, &cache, &Matrix::zeros(2, 2)).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_layer_gradient_is_outer_product() {
        let specs = [LayerSpec::new(3, 2, Activation::Identity)];
        let net = Network::from_parameters(
            &specs,
            Task::Regression,
            (0..8).map(|i| i as f64 * 0.1).collect(),
        )
        .unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let (_, cache) = forward(&net, &x).unwrap();
        let up = Matrix::from_rows(&[[0.5, -2.0]]).unwrap();
        let g = backward(&net, &cache, &up).unwrap();
        assert_eq!(g.as_slice(), &[0.5, 1.0, 1.5, -2.0, -4.0, -6.0, 0.5, -2.0]);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net = init_network(&poc_specs(), Task::Classification, 5).unwrap();
        let x = Matrix::from_rows(&[[0.3, 0.6]]).unwrap();
        let (_, cache) = forward(&net, &x).unwrap();
        let mut adam = AdamState::with_defaults(net.parameter_count());
        adam_step(&mut adam, &mut net, &Gradients(vec![1.0; 52])).unwrap();
        assert!(matches!(
            backward(&net, &cache, &Matrix::zeros(1, 2)),
            Err(NnError::State(_))
        ));
    }

    #[test]
    fn adam_first_step_is_learning_rate() {
        let mut s = AdamState::with_defaults(1);
        let mut theta = [0.0];
        s.update(&mut theta, &[1.0]).unwrap();
        assert!((theta[0] + 0.01).abs() < 1e-6);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn adam_two_constant_steps() {
        // Hand-unrolled recurrence with g = 1:
        // m1 = 0.1, v1 = 0.001; m2 = 0.19, v2 = 0.001999
        // m̂2 = 0.19 / 0.19 = 1, v̂2 = 0.001999 / 0.001999 = 1
        let mut s = AdamState::with_defaults(1);
        let mut theta = [0.0];
        s.update(&mut theta, &[1.0]).unwrap();
        let after_one = theta[0];
        s.update(&mut theta, &[1.0]).unwrap();
        let second = theta[0] - after_one;
        let expected = -0.01 * 1.0 / (1.0 + 1e-8);
        assert!((second - expected).abs() < 1e-12, "{second}");
        assert_eq!(s.step, 2);
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut s = AdamState::with_defaults(3);
        let mut theta = [0.5, -1.0, 2.0];
        for _ in 0..100 {
            s.update(&mut theta, &[0.0; 3]).unwrap();
        }
        assert_eq!(theta, [0.5, -1.0, 2.0]);
        assert!(s.update(&mut theta, &[0.0; 2]).is_err());
    }

    #[test]
    fn softmax_backward_matches_jacobian() {
        let p = Matrix::from_rows(&[[0.2, 0.3, 0.5]]).unwrap();
        let g = Matrix::from_rows(&[[1.0, 0.0, -1.0]]).unwrap();
        let z = softmax_backward(&p, &g).unwrap();
        // J = diag(p) - p pᵀ
        let p_ = [0.2, 0.3, 0.5];
        let g_ = [1.0, 0.0, -1.0];
        for i in 0..3 {
            let mut expected = 0.0;
            for j in 0..3 {
                let jac = if i == j {
                    p_[i] * (1.0 - p_[i])
                } else {
                    -p_[i] * p_[j]
                };
                expected += jac * g_[j];
            }
            assert!((z.get(0, i) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = init_network(&poc_specs(), Task::Classification, 11).unwrap();
        let json = Checkpoint::from_network(&net).to_json();
        let back = Checkpoint::from_json(&json)
            .unwrap()
            .into_network()
            .unwrap();
        assert_eq!(back.parameters(), net.parameters());
        assert_eq!(back.layers(), net.layers());

        let mut bad = Checkpoint::from_network(&net);
        bad.version = 99;
        assert!(bad.into_network().is_err());
        let mut bad = Checkpoint::from_network(&net);
        bad.parameters.pop();
        assert!(bad.into_network().is_err());
    }
}
