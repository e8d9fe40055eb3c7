//! Norms of Gaussian versus uniform-ball samples.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Lower bound on `P[|‖x‖ − σ√n| ≤ σε]` for `x ~ N(0, σ²I_n)`.
pub fn gaussian_bound(eps: f64) -> f64 {
    1.0 - 2.0 * (-eps * eps / 16.0).exp()
}

/// Lower bound on `P[|‖y‖ − r| ≤ δ]` for `y ~ U(B_r(0)) ⊂ ℝⁿ`.
pub fn ball_bound(delta: f64, r: f64, n: usize) -> f64 {
    1.0 - (-delta * n as f64 / r).exp()
}

/// Norms of `count` draws from `N(0, σ²I_n)`; draw `i` uses stream `i`.
pub fn sample_gaussian_norms(n: usize, sigma: f64, count: usize, seed: u64) -> Vec<f64> {
    (0..count)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, i| {
                rng::fill_standard_normal(seed, i as u64, buf);
                sigma * buf.iter().map(|v| v * v).sum::<f64>().sqrt()
            },
        )
        .collect()
}

/// Norms of `count` uniform draws from the ball of radius `r` in `ℝⁿ`,
/// sampled as a Gaussian direction times radius `r·U^{1/n}`.
pub fn sample_ball_norms(n: usize, r: f64, count: usize, seed: u64) -> Vec<f64> {
    (0..count)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, i| {
                let mut g = rng::stream(seed, i as u64);
                for v in buf.iter_mut() {
                    *v = StandardNormal.sample(&mut g);
                }
                let len = buf.iter().map(|v| v * v).sum::<f64>().sqrt();
                let radius = r * g.random::<f64>().powf(1.0 / n as f64);
                // Rebuild the point and take its norm so that the bound is
                // checked on the actual samples, rounding included.
                buf.iter()
                    .map(|v| (v / len * radius).powi(2))
                    .sum::<f64>()
                    .sqrt()
            },
        )
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub n: usize,
    pub sigma: f64,
    pub r: f64,
    pub gaussian_norms: Vec<f64>,
    pub ball_norms: Vec<f64>,
    pub eps_grid: Vec<f64>,
    /// Empirical `P[|‖x‖ − σ√n| ≤ σε]` per grid value.
    pub gaussian_empirical: Vec<f64>,
    pub gaussian_lower_bound: Vec<f64>,
    /// Ball deviations checked, `δ = r·ε/√n` per grid value.
    pub ball_deltas: Vec<f64>,
    pub ball_empirical: Vec<f64>,
    pub ball_lower_bound: Vec<f64>,
    pub max_ball_norm: f64,
}

impl ConcentrationReport {
    pub fn gaussian_bound_holds(&self) -> bool {
        self.gaussian_empirical
            .iter()
            .zip(&self.gaussian_lower_bound)
            .all(|(e, b)| e >= b)
    }

    pub fn ball_bound_holds(&self) -> bool {
        self.ball_empirical
            .iter()
            .zip(&self.ball_lower_bound)
            .all(|(e, b)| e >= b)
    }

    pub fn ball_within_radius(&self) -> bool {
        self.max_ball_norm <= self.r
    }
}

fn fraction_within(values: &[f64], centre: f64, tol: f64) -> f64 {
    values.iter().filter(|v| (*v - centre).abs() <= tol).count() as f64 / values.len() as f64
}

/// Samples both measures and compares their norm concentration with the
/// annulus bounds on the grid `eps_grid` (each entry in `(0, √n)`).
pub fn concentration_check(
    n: usize,
    sigma: f64,
    r: f64,
    count: usize,
    eps_grid: &[f64],
    seed: u64,
) -> Result<ConcentrationReport> {
    if n == 0 || count == 0 {
        return Err(Error::config("dimension and sample count must be >= 1"));
    }
    if !(sigma > 0.0 && r > 0.0) {
        return Err(Error::config("sigma and r must be positive"));
    }
    let root_n = (n as f64).sqrt();
    if eps_grid.iter().any(|&e| !(e > 0.0 && e < root_n)) {
        return Err(Error::config("every eps must lie in (0, sqrt(n))"));
    }
    let gaussian_norms = sample_gaussian_norms(n, sigma, count, rng::derive_seed(seed, 0));
    let ball_norms = sample_ball_norms(n, r, count, rng::derive_seed(seed, 1));
    let centre = sigma * root_n;
    let gaussian_empirical = eps_grid
        .iter()
        .map(|&e| fraction_within(&gaussian_norms, centre, sigma * e))
        .collect();
    let ball_deltas: Vec<f64> = eps_grid.iter().map(|&e| r * e / root_n).collect();
    let ball_empirical = ball_deltas
        .iter()
        .map(|&d| fraction_within(&ball_norms, r, d))
        .collect();
    Ok(ConcentrationReport {
        n,
        sigma,
        r,
        max_ball_norm: ball_norms.iter().copied().fold(0.0, f64::max),
        gaussian_lower_bound: eps_grid.iter().map(|&e| gaussian_bound(e)).collect(),
        ball_lower_bound: ball_deltas.iter().map(|&d| ball_bound(d, r, n)).collect(),
        eps_grid: eps_grid.to_vec(),
        gaussian_norms,
        ball_norms,
        gaussian_empirical,
        ball_deltas,
        ball_empirical,
    })
}
