//! Gaussian (γ,σ)-stability, γ-persistence and related sweeps.

mod bracketing;
mod concentration;
mod estimator;

pub use bracketing::{
    bracketing, bracketing_batch, rangefinder, BisectionStep, Bracket, Censoring,
    NoiseSchedule, PersistenceConfig, PersistenceResult, RANGE_START,
};
pub use concentration::{
    ball_bound, concentration_check, gaussian_bound, sample_ball_norms, sample_gaussian_norms,
    ConcentrationReport,
};
pub use estimator::{compute_persistence, estimate_stability, GaussianProbe, StabilityEstimate};

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::error::{check_dim, Error, Result};
use estimator::check_sigma;

/// Class frequencies of Gaussian samples over a grid of σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub sigma_grid: Vec<f64>,
    /// `|grid| × num_classes`, each row sums to one.
    pub frequencies: Array2<f64>,
    pub base_class: usize,
    pub n_samples: usize,
}

/// `n` equally spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Class frequencies of `n_samples` draws at each of `n_grid` equally
/// spaced σ in `[sigma_lo, sigma_hi]`. All grid points share one set of
/// draws.
pub fn class_frequency_sweep<C: Classifier + ?Sized>(
    net: &C,
    x: ArrayView1<f64>,
    sigma_lo: f64,
    sigma_hi: f64,
    n_grid: usize,
    n_samples: usize,
    seed: u64,
) -> Result<SweepResult> {
    check_dim(net.input_dim(), x.len())?;
    check_sigma(sigma_lo)?;
    check_sigma(sigma_hi)?;
    if sigma_hi <= sigma_lo {
        return Err(Error::config("sweep needs sigma_lo < sigma_hi"));
    }
    if n_grid == 0 {
        return Err(Error::config("sweep grid must have at least one point"));
    }
    let probe = GaussianProbe::new(seed, n_samples, x.len())?;
    let grid = linspace(sigma_lo, sigma_hi, n_grid);
    let k = net.num_classes();
    let mut frequencies = Array2::zeros((n_grid, k));
    for (row, &s) in grid.iter().enumerate() {
        let counts = probe.class_counts(net, x, s);
        for (c, &n) in counts.iter().enumerate() {
            frequencies[[row, c]] = n as f64 / n_samples as f64;
        }
    }
    Ok(SweepResult {
        sigma_grid: grid,
        frequencies,
        base_class: net.predict(x),
        n_samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub index: usize,
    pub t: f64,
    pub class: usize,
    pub persistence: PersistenceResult,
}

/// Persistence at `n_points` equally spaced points of the segment from
/// `x_a` to `x_b`. Every point uses the same configuration and seed.
pub fn persistence_along_path<C: Classifier + ?Sized>(
    net: &C,
    x_a: ArrayView1<f64>,
    x_b: ArrayView1<f64>,
    n_points: usize,
    cfg: &PersistenceConfig,
) -> Result<Vec<PathPoint>> {
    check_dim(net.input_dim(), x_a.len())?;
    check_dim(net.input_dim(), x_b.len())?;
    if n_points < 2 {
        return Err(Error::config("a path needs at least two points"));
    }
    let dir = &x_b - &x_a;
    linspace(0.0, 1.0, n_points)
        .into_iter()
        .enumerate()
        .map(|(index, t)| {
            let x: Array1<f64> = &x_a + &(t * &dir);
            Ok(PathPoint {
                index,
                t,
                class: net.predict(x.view()),
                persistence: bracketing(net, x.view(), cfg)?,
            })
        })
        .collect()
}

/// Index of the first point whose class differs from the first point's.
pub fn class_change_index(path: &[PathPoint]) -> Option<usize> {
    let first = path.first()?.class;
    path.iter().position(|p| p.class != first)
}

/// Index of the smallest persistence value (first one on ties).
pub fn min_persistence_index(path: &[PathPoint]) -> Option<usize> {
    path.iter()
        .enumerate()
        .min_by(|a, b| a.1.persistence.sigma_star.total_cmp(&b.1.persistence.sigma_star))
        .map(|(i, _)| i)
}
