#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView2};
use plab::data::LinearOracle;
use plab::nn::MlpNetwork;
use plab::Classifier;

/// Boundary `x₁ = 0` in `dim` dimensions; class 1 on the positive side.
pub fn e1_oracle(dim: usize) -> LinearOracle {
    let mut n = Array1::zeros(dim);
    n[0] = 1.0;
    LinearOracle::new(n, 0.0).unwrap()
}

pub fn linear_net(dim: usize) -> MlpNetwork {
    e1_oracle(dim).classifier()
}

/// The point `d · e₁`.
pub fn point_at(dim: usize, d: f64) -> Array1<f64> {
    let mut x = Array1::zeros(dim);
    x[0] = d;
    x
}

/// Two classes split by the parabola `x₂ = x₁²`: class 1 above it.
pub struct Parabola;

impl Classifier for Parabola {
    fn input_dim(&self) -> usize {
        2
    }

    fn num_classes(&self) -> usize {
        2
    }

    fn logits_batch(&self, xs: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((xs.nrows(), 2));
        for (i, r) in xs.rows().into_iter().enumerate() {
            let f = r[1] - r[0] * r[0];
            out[[i, 0]] = -0.5 * f;
            out[[i, 1]] = 0.5 * f;
        }
        out
    }

    fn loss_gradient_batch(&self, xs: ArrayView2<f64>, labels: &[usize]) -> Array2<f64> {
        let logits = self.logits_batch(xs);
        let p = plab::classifier::softmax_rows(logits.view());
        let mut out = Array2::zeros((xs.nrows(), 2));
        for (i, r) in xs.rows().into_iter().enumerate() {
            // dL/df = p₁ − [y = 1]; df/dx = (−2x₁, 1).
            let g = p[[i, 1]] - if labels[i] == 1 { 1.0 } else { 0.0 };
            out[[i, 0]] = g * -2.0 * r[0];
            out[[i, 1]] = g;
        }
        out
    }
}
