//! Synthetic datasets whose geometry is known in closed form.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{DatasetContainer, LabeledDataset, Provenance};
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, MlpNetwork};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Two Gaussian classes centred at `∓separation/2 · e₁` with isotropic
    /// standard deviation `noise`. The true boundary is `x₁ = 0`.
    LinearTwoClass { separation: f64, noise: f64 },
    /// `num_classes` Gaussian blobs with means `radius · e_c`.
    GaussianBlobs {
        num_classes: usize,
        radius: f64,
        spread: f64,
    },
    /// Points `U c` with `U` a random orthonormal `dim × k` basis and
    /// `c ~ N(0, scale² I_k)`; the label is the sign of `c₁`.
    PlanarEmbedded { k: usize, scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(flatten)]
    pub kind: SyntheticKind,
    pub dim: usize,
    pub n_per_class: usize,
    pub seed: u64,
}

/// Exact ground truth for a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Oracle {
    Linear(LinearOracle),
    Blobs { means: Array2<f64>, spread: f64 },
    Plane { basis: Array2<f64> },
}

/// The hyperplane `normal · x + offset = 0` with unit `normal`; class 1 lies
/// on the positive side.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOracle {
    pub normal: Array1<f64>,
    pub offset: f64,
}

impl LinearOracle {
    pub fn new(normal: Array1<f64>, offset: f64) -> Result<Self> {
        let n = normal.dot(&normal).sqrt();
        if !(n > 0.0 && n.is_finite() && offset.is_finite()) {
            return Err(Error::config("hyperplane normal must be non-zero and finite"));
        }
        Ok(Self {
            normal: normal / n,
            offset: offset / n,
        })
    }

    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        self.normal
            .iter()
            .zip(x)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + self.offset
    }

    /// Probability that `x + σZ` keeps the class of `x`: `Φ(|d|/σ)`.
    pub fn stability(&self, x: &[f64], sigma: f64) -> f64 {
        std_normal().cdf(self.signed_distance(x).abs() / sigma)
    }

    /// The σ at which the stability of `x` equals `gamma`: `|d| / Φ⁻¹(γ)`.
    pub fn persistence(&self, x: &[f64], gamma: f64) -> f64 {
        persistence_at_distance(self.signed_distance(x).abs(), gamma)
    }

    /// A single linear layer realizing this boundary as a 2-class classifier.
    pub fn classifier(&self) -> MlpNetwork {
        let d = self.normal.len();
        let mut weight = Array2::zeros((2, d));
        for j in 0..d {
            weight[[0, j]] = -0.5 * self.normal[j];
            weight[[1, j]] = 0.5 * self.normal[j];
        }
        let bias = Array1::from(vec![-0.5 * self.offset, 0.5 * self.offset]);
        MlpNetwork::new(
            vec![DenseLayer {
                weight,
                bias,
                activation: Activation::Identity,
            }],
            vec![0.0],
        )
        .expect("valid single layer")
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// `Φ(t)`.
pub fn normal_cdf(t: f64) -> f64 {
    std_normal().cdf(t)
}

/// `Φ⁻¹(p)`.
pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Persistence of a point at distance `d` from a hyperplane.
pub fn persistence_at_distance(d: f64, gamma: f64) -> f64 {
    d / normal_quantile(gamma)
}

/// An orthonormal `dim × k` basis drawn from seeded Gaussian columns.
pub fn random_orthonormal_basis(dim: usize, k: usize, seed: u64) -> Array2<f64> {
    let mut basis = Array2::<f64>::zeros((dim, k));
    let mut col = vec![0.0; dim];
    let mut j = 0;
    let mut draw = 0u64;
    while j < k {
        rng::fill_standard_normal(seed, draw, &mut col);
        draw += 1;
        let mut v = Array1::from(col.clone());
        for _ in 0..2 {
            for p in 0..j {
                let q = basis.column(p);
                let c = q.dot(&v);
                v.scaled_add(-c, &q);
            }
        }
        let n = v.dot(&v).sqrt();
        if n < 1e-8 {
            continue;
        }
        basis.column_mut(j).assign(&(v / n));
        j += 1;
    }
    basis
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("synthetic dim must be >= 1"));
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        match self.kind {
            SyntheticKind::LinearTwoClass { separation, noise } => {
                positive("separation", separation)?;
                positive("noise", noise)
            }
            SyntheticKind::GaussianBlobs {
                num_classes,
                radius,
                spread,
            } => {
                if num_classes < 2 || num_classes > self.dim {
                    return Err(Error::config("blobs need 2 <= num_classes <= dim"));
                }
                positive("radius", radius)?;
                positive("spread", spread)
            }
            SyntheticKind::PlanarEmbedded { k, scale } => {
                if k == 0 || k > self.dim {
                    return Err(Error::config("plane needs 1 <= k <= dim"));
                }
                positive("scale", scale)
            }
        }
    }
}

/// Generates the dataset and its oracle. Identical specs give identical
/// output bit for bit.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(DatasetContainer, Oracle)> {
    spec.validate()?;
    let d = spec.dim;
    let seed = spec.seed;
    let (inputs, labels, num_classes, oracle, name) = match spec.kind {
        SyntheticKind::LinearTwoClass { separation, noise } => {
            let n = 2 * spec.n_per_class;
            let mut xs = Array2::zeros((n, d));
            let mut labels = Vec::with_capacity(n);
            let mut z = vec![0.0; d];
            for i in 0..n {
                let c = i % 2;
                rng::fill_standard_normal(seed, i as u64, &mut z);
                let mut row = xs.row_mut(i);
                for j in 0..d {
                    row[j] = noise * z[j];
                }
                row[0] += if c == 0 { -0.5 } else { 0.5 } * separation;
                labels.push(c);
            }
            let mut normal = Array1::zeros(d);
            normal[0] = 1.0;
            let oracle = Oracle::Linear(LinearOracle::new(normal, 0.0)?);
            (xs, labels, 2, oracle, "linear-two-class")
        }
        SyntheticKind::GaussianBlobs {
            num_classes,
            radius,
            spread,
        } => {
            let n = num_classes * spec.n_per_class;
            let mut means = Array2::zeros((num_classes, d));
            for c in 0..num_classes {
                means[[c, c]] = radius;
            }
            let mut xs = Array2::zeros((n, d));
            let mut labels = Vec::with_capacity(n);
            let mut z = vec![0.0; d];
            for i in 0..n {
                let c = i % num_classes;
                rng::fill_standard_normal(seed, i as u64, &mut z);
                let mut row = xs.row_mut(i);
                for j in 0..d {
                    row[j] = means[[c, j]] + spread * z[j];
                }
                labels.push(c);
            }
            (xs, labels, num_classes, Oracle::Blobs { means, spread }, "gaussian-blobs")
        }
        SyntheticKind::PlanarEmbedded { k, scale } => {
            let basis = random_orthonormal_basis(d, k, rng::derive_seed(seed, u64::MAX));
            let n = 2 * spec.n_per_class;
            let mut coeffs = Array2::zeros((n, k));
            let mut labels = Vec::with_capacity(n);
            let mut z = vec![0.0; k];
            for i in 0..n {
                let c = i % 2;
                rng::fill_standard_normal(seed, i as u64, &mut z);
                z[0] = z[0].abs() * if c == 0 { -1.0 } else { 1.0 };
                for j in 0..k {
                    coeffs[[i, j]] = scale * z[j];
                }
                labels.push(c);
            }
            let xs = coeffs.dot(&basis.t());
            (xs, labels, 2, Oracle::Plane { basis }, "planar-embedded")
        }
    };
    let container = DatasetContainer {
        name: name.into(),
        data: LabeledDataset::new(inputs, labels, num_classes)?,
        provenance: Provenance::Generator { spec: spec.clone() },
    };
    Ok((container, oracle))
}
