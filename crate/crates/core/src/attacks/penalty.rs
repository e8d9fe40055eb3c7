use ndarray::{Array2, ArrayView2, Axis};

use super::{clip_row, distortion, ClipBox};
use crate::classifier::Classifier;

/// Minimizes `c‖δ‖₂² ± L(x + δ, goal)` by projected gradient descent for
/// each `c` in the grid and keeps the lowest-distortion successful
/// minimizer. Only the end point of each descent is a candidate, so the
/// result sits where the penalized objective settles rather than at the
/// first iterate that crosses a boundary.
///
/// Targeted runs descend the target-class loss; untargeted runs ascend the
/// loss of the true label.
#[derive(Debug, Clone)]
pub struct Penalty {
    pub targeted: bool,
    pub c_grid: Vec<f64>,
    pub iterations: usize,
    pub step: f64,
    pub clip: ClipBox,
}

impl Penalty {
    /// Returns the best point per row (the clean input when nothing
    /// succeeded) and the number of descent steps taken before it was found.
    pub fn run<C: Classifier + ?Sized>(
        &self,
        net: &C,
        x0: ArrayView2<f64>,
        goals: &[usize],
        originals: &[usize],
    ) -> (Array2<f64>, Vec<usize>) {
        let n = x0.nrows();
        let mut best = x0.to_owned();
        let mut best_dist = vec![f64::INFINITY; n];
        let mut best_iter = vec![0usize; n];
        let ok = |p: usize, i: usize| {
            if self.targeted {
                p == goals[i]
            } else {
                p != originals[i]
            }
        };
        // Already adversarial at δ = 0.
        let pending: Vec<usize> = (0..n)
            .filter(|&i| {
                if ok(originals[i], i) {
                    best_dist[i] = 0.0;
                    false
                } else {
                    true
                }
            })
            .collect();
        if pending.is_empty() {
            return (best, best_iter);
        }
        let xp = x0.select(Axis(0), &pending);
        let gp: Vec<usize> = pending.iter().map(|&i| goals[i]).collect();
        let loss_sign = if self.targeted { 1.0 } else { -1.0 };
        for (ci, &c) in self.c_grid.iter().enumerate() {
            let mut x = xp.clone();
            for _ in 0..self.iterations {
                let grad = net.loss_gradient_batch(x.view(), &gp);
                for (r, mut row) in x.rows_mut().into_iter().enumerate() {
                    let x0r = xp.row(r);
                    for ((v, &g), &o) in row.iter_mut().zip(grad.row(r)).zip(x0r) {
                        *v -= self.step * (2.0 * c * (*v - o) + loss_sign * g);
                    }
                    clip_row(row, self.clip);
                }
            }
            let preds = net.predict_batch(x.view());
            for (r, &i) in pending.iter().enumerate() {
                if ok(preds[r], i) {
                    let d = distortion(x0.row(i), x.row(r));
                    if d < best_dist[i] {
                        best_dist[i] = d;
                        best.row_mut(i).assign(&x.row(r));
                        best_iter[i] = (ci + 1) * self.iterations;
                    }
                }
            }
        }
        (best, best_iter)
    }
}
