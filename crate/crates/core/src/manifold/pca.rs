use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::LabeledDataset;
use crate::error::{check_dim, Error, Result};

/// Points whose distance to the subspace is at most this fraction of
/// their norm are treated as lying in it, which makes projection exactly
/// idempotent in floating point.
pub const IN_SPAN_TOLERANCE: f64 = 1e-10;

/// Relative size below which a component is discarded as rank deficient.
const RANK_TOLERANCE: f64 = 1e-9;

/// Orthonormal rows `W` (`k × d`) spanning a linear data manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjector {
    pub k: usize,
    pub d: usize,
    /// Row-major `k × d`.
    pub components: Vec<f64>,
    /// Hex SHA-256 of the training inputs and labels.
    pub fitted_on: String,
    #[serde(default)]
    pub k_per_class: usize,
    #[serde(default)]
    pub centered: bool,
}

impl PcaProjector {
    /// Builds a projector from rows that are already orthonormal.
    pub fn from_components(w: Array2<f64>, fitted_on: &str) -> Result<Self> {
        let (k, d) = w.dim();
        if k == 0 || k >= d {
            return Err(Error::config(format!("need 0 < k < d, got k={k}, d={d}")));
        }
        let gram = w.dot(&w.t());
        let err = (&gram - &Array2::<f64>::eye(k))
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if err > 1e-10 {
            return Err(Error::Numeric(format!(
                "component rows are not orthonormal (max error {err:e})"
            )));
        }
        Ok(Self {
            k,
            d,
            components: w.iter().copied().collect(),
            fitted_on: fitted_on.into(),
            k_per_class: 0,
            centered: false,
        })
    }

    pub fn w(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.k, self.d), &self.components).expect("shape checked")
    }

    /// `x Wᵀ W` for every row of `xs`, without the in-span shortcut.
    pub fn project_rows_raw(&self, xs: ArrayView2<f64>) -> Array2<f64> {
        let w = self.w();
        xs.dot(&w.t()).dot(&w)
    }

    /// Projection of one vector. Vectors already in the span are returned
    /// unchanged.
    pub fn project(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dim(self.d, x.len())?;
        let p = self.project_rows_raw(x.insert_axis(Axis(0))).remove_axis(Axis(0));
        Ok(snap(x, p))
    }

    pub fn project_rows(&self, xs: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.d, xs.ncols())?;
        let mut p = self.project_rows_raw(xs);
        for (mut out, x) in p.rows_mut().into_iter().zip(xs.rows()) {
            let snapped = snap(x, out.to_owned());
            out.assign(&snapped);
        }
        Ok(p)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let p: Self = serde_json::from_slice(&bytes)?;
        if p.components.len() != p.k * p.d {
            return Err(Error::Format {
                what: "projector file",
                offset: 0,
                reason: "component count does not match k × d".into(),
            });
        }
        Ok(p)
    }
}

fn snap(x: ArrayView1<f64>, p: Array1<f64>) -> Array1<f64> {
    let nx = x.dot(&x).sqrt();
    let off: f64 = x
        .iter()
        .zip(&p)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if off <= IN_SPAN_TOLERANCE * nx {
        x.to_owned()
    } else {
        p
    }
}

/// Hex SHA-256 over the little-endian inputs followed by the labels.
pub fn dataset_fingerprint(data: &LabeledDataset) -> String {
    let mut h = Sha256::new();
    for v in data.inputs().iter() {
        h.update(v.to_le_bytes());
    }
    for &y in data.labels() {
        h.update((y as u64).to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Per-class principal directions, concatenated and re-orthonormalized.
///
/// Without centering the directions are eigenvectors of each class's
/// second-moment matrix `X_cᵀ X_c`, so that `x Wᵀ W` reconstructs the data
/// itself rather than deviations from a mean.
pub fn fit_pca(data: &LabeledDataset, k_per_class: usize, centered: bool) -> Result<PcaProjector> {
    let d = data.dim();
    if k_per_class == 0 {
        return Err(Error::config("k_per_class must be >= 1"));
    }
    let mut candidates: Vec<Array1<f64>> = Vec::new();
    for class in 0..data.num_classes() {
        let idx = data.indices_of_class(class);
        if idx.is_empty() {
            log::warn!("class {class} has no samples; no components taken");
            continue;
        }
        let mut xc = data.inputs().select(Axis(0), &idx);
        if centered {
            let mean = xc.mean_axis(Axis(0)).expect("non-empty");
            xc -= &mean;
        }
        let moment = xc.t().dot(&xc);
        let m = DMatrix::from_row_slice(d, d, moment.as_slice().expect("standard layout"));
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let top = eig.eigenvalues[order[0]].max(0.0);
        let mut taken = 0;
        for &i in order.iter().take(k_per_class) {
            if eig.eigenvalues[i] <= RANK_TOLERANCE * top || top == 0.0 {
                break;
            }
            candidates.push(Array1::from_iter(eig.eigenvectors.column(i).iter().copied()));
            taken += 1;
        }
        if taken < k_per_class {
            log::warn!("class {class}: only {taken} of {k_per_class} components are non-degenerate");
        }
    }
    let basis = orthonormalize(candidates);
    if basis.is_empty() {
        return Err(Error::Numeric("PCA produced no components".into()));
    }
    let k = basis.len();
    if k >= d {
        return Err(Error::config(format!(
            "{k} components span the whole {d}-dimensional space"
        )));
    }
    let mut w = Array2::zeros((k, d));
    for (r, v) in basis.iter().enumerate() {
        w.row_mut(r).assign(v);
    }
    let mut p = PcaProjector::from_components(w, &dataset_fingerprint(data))?;
    p.k_per_class = k_per_class;
    p.centered = centered;
    Ok(p)
}

/// Modified Gram–Schmidt with column pivoting: repeatedly takes the
/// candidate with the largest residual, dropping residuals that fall below
/// the rank tolerance.
pub fn orthonormalize(mut vs: Vec<Array1<f64>>) -> Vec<Array1<f64>> {
    let scale = vs.iter().map(|v| v.dot(v).sqrt()).fold(0.0, f64::max);
    let mut basis: Vec<Array1<f64>> = Vec::new();
    while !vs.is_empty() {
        let (best, norm) = vs
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.dot(v).sqrt()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        if norm <= RANK_TOLERANCE * scale || norm == 0.0 {
            if !vs.is_empty() {
                log::warn!("{} candidate directions were linearly dependent and dropped", vs.len());
            }
            break;
        }
        let mut q = vs.swap_remove(best);
        // Re-orthogonalize once more against the accepted basis.
        for b in &basis {
            let c = b.dot(&q);
            q.scaled_add(-c, b);
        }
        let n = q.dot(&q).sqrt();
        q /= n;
        for v in vs.iter_mut() {
            let c = q.dot(v);
            v.scaled_add(-c, &q);
        }
        basis.push(q);
    }
    basis
}

/// A dataset whose inputs are replaced by their projections.
pub fn project_dataset(data: &LabeledDataset, projector: &PcaProjector) -> Result<LabeledDataset> {
    let xs = projector.project_rows(data.inputs())?;
    LabeledDataset::new(xs, data.labels().to_vec(), data.num_classes())
}

/// Fraction of the total second moment captured by each component.
pub fn explained_variance(data: &LabeledDataset, projector: &PcaProjector) -> Vec<f64> {
    let coeffs = data.inputs().dot(&projector.w().t());
    let total: f64 = data.inputs().iter().map(|v| v * v).sum();
    coeffs
        .axis_iter(Axis(1))
        .map(|c| c.iter().map(|v| v * v).sum::<f64>() / total)
        .collect()
}
