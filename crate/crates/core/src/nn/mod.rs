//! Dense feed-forward classifiers built from scratch.
//!
//! Weights are stored `out × in`; a batch is a matrix with one example per
//! row, so a layer computes `Z = A Wᵀ + b`. Hidden layers use ReLU and the
//! last layer emits raw logits.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointLayer};
pub use train::{
    accuracy, cross_entropy_gradients, fit, mean_cross_entropy, train, BatchGrad, CrossEntropy,
    Objective, Optimizer, StepInfo, TrainConfig, TrainReport,
};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::classifier::{softmax_rows, Classifier};
use crate::error::{check_dim, Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out × in`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Training provenance stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seed: Option<u64>,
    pub epochs: usize,
    pub accuracy: Option<f64>,
}

/// A fully connected classifier with per-layer L2 regularization strength.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<DenseLayer>,
    reg_lambda: Vec<f64>,
    pub meta: ModelMeta,
}

/// Activations recorded by a batched forward pass. `acts[0]` is the input
/// and `acts[l + 1]` the post-activation output of layer `l`.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub acts: Vec<Array2<f64>>,
}

impl ForwardPass {
    pub fn logits(&self) -> &Array2<f64> {
        self.acts.last().expect("forward pass has an output")
    }
}

/// Parameter gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weight.raw_dim()))
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.raw_dim()))
                .collect(),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.scaled_add(scale, b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.scaled_add(scale, b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            *w *= s;
        }
        for b in &mut self.biases {
            *b *= s;
        }
    }

    /// All entries flattened layer by layer (weights, then bias).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

impl MlpNetwork {
    pub fn new(layers: Vec<DenseLayer>, reg_lambda: Vec<f64>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        if reg_lambda.len() != layers.len() {
            return Err(Error::config(format!(
                "{} regularization strengths for {} layers",
                reg_lambda.len(),
                layers.len()
            )));
        }
        if reg_lambda.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::config("regularization strengths must be finite and >= 0"));
        }
        for pair in layers.windows(2) {
            check_dim(pair[0].out_dim(), pair[1].in_dim())?;
        }
        for l in &layers {
            check_dim(l.out_dim(), l.bias.len())?;
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Numeric("non-finite network parameter".into()));
            }
        }
        if layers.last().map(|l| l.activation) != Some(Activation::Identity) {
            return Err(Error::config("final layer must emit logits (identity activation)"));
        }
        Ok(Self {
            layers,
            reg_lambda,
            meta: ModelMeta::default(),
        })
    }

    /// Randomly initialised ReLU network with layer widths `sizes`
    /// (`sizes[0]` is the input dimension, the last entry the class count).
    /// Weights are uniform on ±1/√fan_in, biases start at zero.
    pub fn init(sizes: &[usize], reg_lambda: Vec<f64>, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::config(format!("invalid layer sizes {sizes:?}")));
        }
        let mut rng = rng::stream(seed, 0);
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || rng.sample(dist));
                DenseLayer {
                    weight,
                    bias: Array1::zeros(fan_out),
                    activation: if l + 1 == n {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    },
                }
            })
            .collect();
        let mut net = Self::new(layers, reg_lambda)?;
        net.meta.seed = Some(seed);
        Ok(net)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn reg_lambda(&self) -> &[f64] {
        &self.reg_lambda
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Layer widths, input first.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.out_dim()))
            .collect()
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dim(self.input_dim(), x.len())?;
        Ok(self.logits(x))
    }

    pub fn predict(&self, x: ArrayView1<f64>) -> Result<usize> {
        check_dim(self.input_dim(), x.len())?;
        Ok(Classifier::predict(self, x))
    }

    /// Gradient of the cross-entropy loss at `(x, y)` with respect to `x`.
    pub fn input_gradient(&self, x: ArrayView1<f64>, y: usize) -> Result<Array1<f64>> {
        check_dim(self.input_dim(), x.len())?;
        self.check_class(y)?;
        Ok(self.loss_gradient(x, y))
    }

    pub(crate) fn check_class(&self, y: usize) -> Result<()> {
        if y < self.num_classes() {
            Ok(())
        } else {
            Err(Error::InvalidClass {
                class: y,
                num_classes: self.num_classes(),
            })
        }
    }

    /// Batched forward pass keeping every layer's activations.
    pub fn forward_pass(&self, xs: ArrayView2<f64>) -> ForwardPass {
        assert_eq!(xs.ncols(), self.input_dim(), "input dimension");
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(xs.to_owned());
        for layer in &self.layers {
            let prev = acts.last().expect("non-empty");
            let mut z = prev.dot(&layer.weight.t());
            z += &layer.bias;
            if layer.activation == Activation::Relu {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        ForwardPass { acts }
    }

    /// Back-propagates `delta_out` (the loss gradient with respect to the
    /// logits, one row per example) through a recorded pass.
    ///
    /// Returns parameter gradients summed over the batch when `params` is
    /// set, and per-row input gradients when `input` is set.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        delta_out: Array2<f64>,
        params: bool,
        input: bool,
    ) -> (Option<Gradients>, Option<Array2<f64>>) {
        let n = self.layers.len();
        let mut grads = params.then(|| Gradients::zeros_like(self));
        let mut delta = delta_out;
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            if let Some(g) = grads.as_mut() {
                g.weights[l] = delta.t().dot(&pass.acts[l]);
                g.biases[l] = delta.sum_axis(Axis(0));
            }
            if l == 0 {
                if input {
                    return (grads, Some(delta.dot(&layer.weight)));
                }
                break;
            }
            let mut upstream = delta.dot(&layer.weight);
            if self.layers[l - 1].activation == Activation::Relu {
                ndarray::Zip::from(&mut upstream)
                    .and(&pass.acts[l])
                    .for_each(|d, &a| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            delta = upstream;
        }
        (grads, None)
    }

    /// `Σ λ_l ‖W_l‖² / N_l` where `N_l` is the number of weights in layer `l`.
    pub fn regularization(&self) -> f64 {
        self.layers
            .iter()
            .zip(&self.reg_lambda)
            .filter(|(_, &lam)| lam > 0.0)
            .map(|(l, &lam)| lam * l.weight.iter().map(|w| w * w).sum::<f64>() / l.weight.len() as f64)
            .sum()
    }

    /// Adds the gradient of [`Self::regularization`] into `grads`.
    pub fn add_regularization_gradient(&self, grads: &mut Gradients) {
        for ((l, &lam), g) in self
            .layers
            .iter()
            .zip(&self.reg_lambda)
            .zip(grads.weights.iter_mut())
        {
            if lam > 0.0 {
                g.scaled_add(2.0 * lam / l.weight.len() as f64, &l.weight);
            }
        }
    }

    /// Parameters flattened in the same order as [`Gradients::flatten`].
    pub fn flatten_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    /// Inverse of [`Self::flatten_parameters`].
    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        check_dim(self.num_parameters(), flat.len())?;
        let mut off = 0;
        for l in &mut self.layers {
            for w in l.weight.iter_mut() {
                *w = flat[off];
                off += 1;
            }
            for b in l.bias.iter_mut() {
                *b = flat[off];
                off += 1;
            }
        }
        Ok(())
    }

    /// `θ ← θ − lr · g`.
    pub fn apply_update(&mut self, step: &Gradients, lr: f64) {
        for ((l, gw), gb) in self
            .layers
            .iter_mut()
            .zip(&step.weights)
            .zip(&step.biases)
        {
            l.weight.scaled_add(-lr, gw);
            l.bias.scaled_add(-lr, gb);
        }
    }
}

impl Classifier for MlpNetwork {
    fn input_dim(&self) -> usize {
        MlpNetwork::input_dim(self)
    }

    fn num_classes(&self) -> usize {
        MlpNetwork::num_classes(self)
    }

    fn logits_batch(&self, xs: ArrayView2<f64>) -> Array2<f64> {
        let mut a = xs.dot(&self.layers[0].weight.t());
        a += &self.layers[0].bias;
        if self.layers[0].activation == Activation::Relu {
            a.mapv_inplace(|v| v.max(0.0));
        }
        for layer in &self.layers[1..] {
            let mut z = a.dot(&layer.weight.t());
            z += &layer.bias;
            if layer.activation == Activation::Relu {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        a
    }

    fn loss_gradient_batch(&self, xs: ArrayView2<f64>, labels: &[usize]) -> Array2<f64> {
        let pass = self.forward_pass(xs);
        let mut delta = softmax_rows(pass.logits().view());
        for (mut row, &y) in delta.rows_mut().into_iter().zip(labels) {
            row[y] -= 1.0;
        }
        self.backward(&pass, delta, false, true)
            .1
            .expect("input gradient requested")
    }
}
