//! The classifier abstraction shared by attacks, stability estimates and
//! boundary geometry.
//!
//! A classifier maps ℝᵈ to logits over `num_classes` labels; its decision is
//! the argmax of the logits with ties going to the lowest class index, which
//! makes `predict` a total function.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

pub trait Classifier: Sync {
    fn input_dim(&self) -> usize;

    fn num_classes(&self) -> usize;

    /// Logits for each row of `xs`. Panics if `xs.ncols() != input_dim()`.
    fn logits_batch(&self, xs: ArrayView2<f64>) -> Array2<f64>;

    /// Gradient of the softmax cross-entropy loss `L(x, label)` with respect
    /// to each input row.
    fn loss_gradient_batch(&self, xs: ArrayView2<f64>, labels: &[usize]) -> Array2<f64>;

    fn logits(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.logits_batch(x.insert_axis(Axis(0)))
            .index_axis_move(Axis(0), 0)
    }

    fn predict(&self, x: ArrayView1<f64>) -> usize {
        argmax(self.logits(x).view())
    }

    fn predict_batch(&self, xs: ArrayView2<f64>) -> Vec<usize> {
        self.logits_batch(xs)
            .rows()
            .into_iter()
            .map(argmax)
            .collect()
    }

    fn loss_gradient(&self, x: ArrayView1<f64>, label: usize) -> Array1<f64> {
        self.loss_gradient_batch(x.insert_axis(Axis(0)), &[label])
            .index_axis_move(Axis(0), 0)
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(v: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut p = logits.mapv(|z| (z - max).exp());
    let s = p.sum();
    p /= s;
    p
}

/// Row-wise softmax.
pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|z| (z - max).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

/// Softmax cross-entropy `-log p_label` computed through log-sum-exp.
pub fn cross_entropy(logits: ArrayView1<f64>, label: usize) -> f64 {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let lse = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
    lse - logits[label]
}

/// Difference between the two largest softmax probabilities.
pub fn top2_probability_gap(logits: ArrayView1<f64>) -> f64 {
    let p = softmax(logits);
    let mut sorted: Vec<f64> = p.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted.len() < 2 {
        return 1.0;
    }
    sorted[0] - sorted[1]
}

/// A classifier that returns the same class everywhere.
#[derive(Debug, Clone)]
pub struct ConstantClassifier {
    pub dim: usize,
    pub num_classes: usize,
    pub class: usize,
}

impl Classifier for ConstantClassifier {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn logits_batch(&self, xs: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(xs.ncols(), self.dim);
        let mut out = Array2::zeros((xs.nrows(), self.num_classes));
        out.column_mut(self.class).fill(1.0);
        out
    }

    fn loss_gradient_batch(&self, xs: ArrayView2<f64>, _labels: &[usize]) -> Array2<f64> {
        Array2::zeros(xs.raw_dim())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(array![0.1, 0.9, 0.0].view()), 1);
        assert_eq!(argmax(array![0.5, 0.5, 0.0].view()), 0);
        assert_eq!(argmax(array![0.0, 2.0, 2.0].view()), 1);
    }

    #[test]
    fn cross_entropy_matches_log_softmax() {
        let z = array![1.0, -2.0, 0.5];
        let p = softmax(z.view());
        assert!((cross_entropy(z.view(), 2) + p[2].ln()).abs() < 1e-14);
        assert!((p.sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_is_stable_for_large_logits() {
        let z = array![1000.0, 0.0];
        assert!(cross_entropy(z.view(), 0).abs() < 1e-12);
        assert!((cross_entropy(z.view(), 1) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn constant_classifier_predicts_its_class() {
        let c = ConstantClassifier {
            dim: 3,
            num_classes: 4,
            class: 2,
        };
        assert_eq!(c.predict(array![1.0, -5.0, 2.0].view()), 2);
    }
}
