use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bisect_rows, BoundaryPoint};
use crate::classifier::Classifier;
use crate::error::{check_dim, Error, Result};
use crate::rng;

/// Above this dimension the Gram matrix is not fully diagonalized.
const DENSE_EIGEN_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalConfig {
    pub n_samples: usize,
    pub sigma: f64,
    pub seed: u64,
    /// Doublings of the crossing step before a sample is dropped.
    pub max_doublings: usize,
    /// Bisection halvings when projecting a sample back to the boundary.
    pub bisect_iters: usize,
}

impl Default for NormalConfig {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            sigma: 1e-6,
            seed: 0,
            max_doublings: 80,
            bisect_iters: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalEstimate {
    /// Unit normal, oriented along the bisected segment.
    pub normal: Array1<f64>,
    pub smallest_singular_value: f64,
    /// Second-smallest over smallest singular value.
    pub singular_gap: f64,
    /// `‖Gv − λv‖` for the Gram matrix `G` and its smallest eigenpair.
    pub residual: f64,
    pub n_samples_used: usize,
    /// How samples were carried across the boundary.
    pub projection: String,
}

pub const PROJECTION_METHOD: &str = "targeted-gradient-step-doubling+bisection";

/// Estimates the boundary normal at `bp` from projected Gaussian samples.
///
/// Each sample `p ~ N(x_b, σ²I)` takes a normalized step down the
/// cross-entropy of the class on the other side, doubling the step until
/// the prediction changes. The segment is then bisected back onto the
/// boundary. The normal is the smallest eigenvector of `DᵀD`, where the
/// rows of `D` are the projected points minus `x_b`.
pub fn estimate_normal<C: Classifier + ?Sized>(
    net: &C,
    bp: &BoundaryPoint,
    cfg: &NormalConfig,
) -> Result<NormalEstimate> {
    let d = bp.x_b.len();
    check_dim(net.input_dim(), d)?;
    if !(cfg.sigma > 0.0) || cfg.n_samples == 0 {
        return Err(Error::config("normal estimation needs sigma > 0 and samples >= 1"));
    }
    let n = cfg.n_samples;
    let mut samples = Array2::<f64>::zeros((n, d));
    samples
        .as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(i, row)| {
            let mut z = vec![0.0; d];
            rng::fill_standard_normal(cfg.seed, i as u64, &mut z);
            for ((r, &x), zi) in row.iter_mut().zip(&bp.x_b).zip(z) {
                *r = x + cfg.sigma * zi;
            }
        });
    let classes = net.predict_batch(samples.view());
    let targets: Vec<usize> = classes
        .iter()
        .map(|&c| if c == bp.class_lo { bp.class_hi } else { bp.class_lo })
        .collect();
    let grads = net.loss_gradient_batch(samples.view(), &targets);

    // Step sizes per row, doubled until the class flips.
    let mut dirs = Array2::<f64>::zeros((n, d));
    let mut ok = vec![true; n];
    for i in 0..n {
        let g = grads.row(i);
        let len = g.dot(&g).sqrt();
        if len > 0.0 && len.is_finite() {
            dirs.row_mut(i).assign(&(&g * (-1.0 / len)));
        } else {
            ok[i] = false;
        }
    }
    let mut step = vec![cfg.sigma; n];
    let mut crossed = vec![false; n];
    let mut ends = samples.clone();
    for _ in 0..=cfg.max_doublings {
        let pending: Vec<usize> = (0..n).filter(|&i| ok[i] && !crossed[i]).collect();
        if pending.is_empty() {
            break;
        }
        let mut trial = Array2::zeros((pending.len(), d));
        for (r, &i) in pending.iter().enumerate() {
            let mut row = trial.row_mut(r);
            row.assign(&samples.row(i));
            row.scaled_add(step[i], &dirs.row(i));
        }
        let preds = net.predict_batch(trial.view());
        for (r, &i) in pending.iter().enumerate() {
            if preds[r] != classes[i] {
                crossed[i] = true;
                ends.row_mut(i).assign(&trial.row(r));
            } else {
                step[i] *= 2.0;
            }
        }
    }
    let used: Vec<usize> = (0..n).filter(|&i| crossed[i]).collect();
    if used.len() < d + 1 {
        return Err(Error::InsufficientSamples {
            survivors: used.len(),
            required: d + 1,
        });
    }
    let a = samples.select(Axis(0), &used);
    let b = ends.select(Axis(0), &used);
    let ca: Vec<usize> = used.iter().map(|&i| classes[i]).collect();
    let projected = bisect_rows(net, a.view(), b.view(), &ca, cfg.bisect_iters);
    let diffs = &projected - &bp.x_b.view().insert_axis(Axis(0));
    let gram = diffs.t().dot(&diffs);

    let (lambda, mut v, lambda2) = smallest_eigenpair(&gram)?;
    if v.dot(&bp.direction) < 0.0 {
        v.mapv_inplace(|x| -x);
    }
    let residual = {
        let gv = gram.dot(&v);
        (&gv - &(lambda * &v)).dot(&(&gv - &(lambda * &v))).sqrt()
    };
    let s_min = lambda.max(0.0).sqrt();
    let s_2 = lambda2.max(0.0).sqrt();
    Ok(NormalEstimate {
        normal: v,
        smallest_singular_value: s_min,
        singular_gap: if s_min > 0.0 { s_2 / s_min } else { f64::INFINITY },
        residual,
        n_samples_used: used.len(),
        projection: PROJECTION_METHOD.into(),
    })
}

/// Smallest eigenvalue, its unit eigenvector and the second-smallest
/// eigenvalue of a symmetric positive semi-definite matrix.
pub fn smallest_eigenpair(gram: &Array2<f64>) -> Result<(f64, Array1<f64>, f64)> {
    let d = gram.nrows();
    if d == 0 || gram.ncols() != d {
        return Err(Error::config("Gram matrix must be square and non-empty"));
    }
    if d == 1 {
        return Ok((gram[[0, 0]], Array1::from(vec![1.0]), f64::INFINITY));
    }
    let m = DMatrix::from_row_slice(d, d, gram.as_slice().expect("standard layout"));
    if d <= DENSE_EIGEN_LIMIT {
        let eig = SymmetricEigen::new(m.clone());
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let (l1, l2) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
        let v0 = eig.eigenvectors.column(order[0]).into_owned();
        let v = refine(&m, v0, l1, l2);
        let lambda = v.dot(&(&m * &v));
        return Ok((lambda, Array1::from(v.as_slice().to_vec()), l2));
    }
    // Large inputs: inverse iteration on a slightly shifted matrix.
    let trace: f64 = (0..d).map(|i| m[(i, i)]).sum();
    let shift = 1e-12 * trace / d as f64 + f64::MIN_POSITIVE;
    let shifted = &m + DMatrix::identity(d, d) * shift;
    let chol = shifted
        .cholesky()
        .ok_or_else(|| Error::Numeric("Gram matrix is not positive definite".into()))?;
    let mut v = DVector::from_fn(d, |i, _| 1.0 + (i as f64 * 0.618).fract());
    v.normalize_mut();
    for _ in 0..100 {
        let mut w = chol.solve(&v);
        w.normalize_mut();
        let done = (w.dot(&v).abs() - 1.0).abs() < 1e-15;
        v = w;
        if done {
            break;
        }
    }
    let lambda = v.dot(&(&m * &v));
    // Deflate to estimate the next eigenvalue for the gap.
    let mut u = DVector::from_fn(d, |i, _| 1.0 + (i as f64 * 0.414).fract());
    for _ in 0..100 {
        let p = v.dot(&u);
        u -= &v * p;
        u.normalize_mut();
        u = chol.solve(&u);
        u.normalize_mut();
    }
    let p = v.dot(&u);
    u -= &v * p;
    u.normalize_mut();
    let lambda2 = u.dot(&(&m * &u));
    Ok((lambda, Array1::from(v.as_slice().to_vec()), lambda2))
}

/// A few steps of shifted inverse iteration around `l1`.
fn refine(m: &DMatrix<f64>, v0: DVector<f64>, l1: f64, l2: f64) -> DVector<f64> {
    let d = m.nrows();
    let gap = (l2 - l1).abs();
    if gap == 0.0 {
        return v0;
    }
    let shift = l1 - 1e-3 * gap;
    let lu = (m - DMatrix::identity(d, d) * shift).lu();
    let mut v = v0.clone();
    for _ in 0..2 {
        match lu.solve(&v) {
            Some(mut w) if w.iter().all(|x| x.is_finite()) => {
                w.normalize_mut();
                if w.dot(&v) < 0.0 {
                    w = -w;
                }
                v = w;
            }
            _ => return v0,
        }
    }
    v
}

