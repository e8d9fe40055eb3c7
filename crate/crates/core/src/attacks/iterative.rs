use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{clip_row, project_ball, sign, ClipBox, Norm};
use crate::classifier::Classifier;
use crate::rng;

/// Iterated gradient steps covering BIM/IGSM, MIFGSM and PGD.
#[derive(Debug, Clone)]
pub struct Iterative {
    pub targeted: bool,
    /// Ball around the clean input to project onto; `None` is unbounded.
    pub radius: Option<f64>,
    /// Ball and step geometry: `Linf` steps by `sign(g)`, `L2` by `g/‖g‖₂`.
    pub norm: Norm,
    pub step: f64,
    pub iterations: usize,
    /// MIFGSM decay `μ` for `g ← μ g + ∇/‖∇‖₁`.
    pub momentum: Option<f64>,
    /// Seed for a uniform random start inside the ball.
    pub random_start: Option<u64>,
    pub clip: ClipBox,
    pub early_stop: bool,
}

impl Iterative {
    /// Returns the perturbed batch and the number of steps taken per row.
    /// Row `i` seeds its random start with `seed ^ (first_row + i)`.
    pub fn run<C: Classifier + ?Sized>(
        &self,
        net: &C,
        x0: ArrayView2<f64>,
        goals: &[usize],
        originals: &[usize],
        first_row: u64,
    ) -> (Array2<f64>, Vec<usize>) {
        let (n, d) = x0.dim();
        let mut x = x0.to_owned();
        if let (Some(seed), Some(eps)) = (self.random_start, self.radius) {
            for (i, mut row) in x.rows_mut().into_iter().enumerate() {
                let mut g = rng::stream(seed ^ (first_row + i as u64), 0);
                match self.norm {
                    Norm::Linf => {
                        for v in row.iter_mut() {
                            *v += g.random_range(-eps..=eps);
                        }
                    }
                    Norm::L2 => {
                        let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut g)).collect();
                        let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let r = eps * g.random::<f64>().powf(1.0 / d as f64);
                        if len > 0.0 {
                            for (v, z) in row.iter_mut().zip(dir) {
                                *v += r * z / len;
                            }
                        }
                    }
                }
                project_ball(row.view_mut(), x0.row(i), eps, self.norm);
                clip_row(row, self.clip);
            }
        }

        let mut used = vec![0usize; n];
        let mut velocity = self.momentum.map(|_| Array2::<f64>::zeros((n, d)));
        let mut active: Vec<usize> = (0..n).collect();
        let dir_sign = if self.targeted { -1.0 } else { 1.0 };
        for _ in 0..self.iterations {
            if self.early_stop {
                let preds = net.predict_batch(x.select(Axis(0), &active).view());
                let keep: Vec<usize> = active
                    .iter()
                    .zip(preds)
                    .filter(|&(&i, p)| {
                        !if self.targeted { p == goals[i] } else { p != originals[i] }
                    })
                    .map(|(&i, _)| i)
                    .collect();
                active = keep;
            }
            if active.is_empty() {
                break;
            }
            let xa = x.select(Axis(0), &active);
            let la: Vec<usize> = active.iter().map(|&i| goals[i]).collect();
            let grad = net.loss_gradient_batch(xa.view(), &la);
            for (r, &i) in active.iter().enumerate() {
                let mut g = grad.row(r).to_owned();
                if let (Some(mu), Some(v)) = (self.momentum, velocity.as_mut()) {
                    let l1: f64 = g.iter().map(|a| a.abs()).sum();
                    if l1 > 0.0 {
                        g /= l1;
                    }
                    let mut vi = v.row_mut(i);
                    vi *= mu;
                    vi += &g;
                    g.assign(&vi);
                }
                let mut row = x.row_mut(i);
                match self.norm {
                    Norm::Linf => {
                        for (xv, &gv) in row.iter_mut().zip(&g) {
                            *xv += dir_sign * self.step * sign(gv);
                        }
                    }
                    Norm::L2 => {
                        let l2 = g.dot(&g).sqrt();
                        if l2 > 0.0 {
                            row.scaled_add(dir_sign * self.step / l2, &g);
                        }
                    }
                }
                if let Some(eps) = self.radius {
                    project_ball(row.view_mut(), x0.row(i), eps, self.norm);
                }
                clip_row(row, self.clip);
                used[i] += 1;
            }
        }
        (x, used)
    }
}
