use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::error::{check_dim, Error, Result};
use crate::rng;

/// Rows classified per batch.
const CHUNK: usize = 256;
/// Largest noise bank (in f64 entries) kept in memory between evaluations.
const CACHE_LIMIT: usize = 1 << 24;

/// Monte Carlo estimate of the probability that `N(x, σ²I)` samples keep
/// the class of `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityEstimate {
    pub sigma: f64,
    pub n_samples: usize,
    /// Samples assigned to each class.
    pub class_counts: Vec<usize>,
    pub gamma_hat: f64,
    pub base_class: usize,
    pub seed: u64,
}

impl StabilityEstimate {
    /// Binomial standard error of `gamma_hat`.
    pub fn standard_error(&self) -> f64 {
        (self.gamma_hat * (1.0 - self.gamma_hat) / self.n_samples as f64).sqrt()
    }
}

/// A fixed set of standard-normal draws `Z_1..Z_N` in `ℝ^dim`.
///
/// Every estimate made through one probe uses samples `x + σ Z_i`, so
/// estimates at different σ share their randomness. Draw `i` comes from
/// stream `i` of `seed` and is identical whether or not the bank is cached.
#[derive(Debug, Clone)]
pub struct GaussianProbe {
    seed: u64,
    n_samples: usize,
    dim: usize,
    bank: Option<Vec<f64>>,
}

impl GaussianProbe {
    pub fn new(seed: u64, n_samples: usize, dim: usize) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::config("number of samples must be >= 1"));
        }
        let bank = n_samples
            .checked_mul(dim)
            .filter(|&len| len <= CACHE_LIMIT)
            .map(|len| {
                let mut bank = vec![0.0; len];
                if dim > 0 {
                    bank.par_chunks_mut(dim)
                        .enumerate()
                        .for_each(|(i, row)| rng::fill_standard_normal(seed, i as u64, row));
                }
                bank
            });
        Ok(Self {
            seed,
            n_samples,
            dim,
            bank,
        })
    }

    /// A probe that regenerates its draws on every call.
    pub fn uncached(seed: u64, n_samples: usize, dim: usize) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::config("number of samples must be >= 1"));
        }
        Ok(Self {
            seed,
            n_samples,
            dim,
            bank: None,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Draw `Z_i`.
    pub fn draw(&self, i: usize, out: &mut [f64]) {
        assert!(i < self.n_samples && out.len() == self.dim);
        match &self.bank {
            Some(bank) => out.copy_from_slice(&bank[i * self.dim..(i + 1) * self.dim]),
            None => rng::fill_standard_normal(self.seed, i as u64, out),
        }
    }

    /// Class counts of the samples `x + σ Z_i`.
    pub fn class_counts<C: Classifier + ?Sized>(
        &self,
        net: &C,
        x: ArrayView1<f64>,
        sigma: f64,
    ) -> Vec<usize> {
        assert_eq!(x.len(), self.dim, "probe dimension");
        let k = net.num_classes();
        let n_chunks = self.n_samples.div_ceil(CHUNK);
        (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let start = c * CHUNK;
                let end = (start + CHUNK).min(self.n_samples);
                let mut batch = Array2::<f64>::zeros((end - start, self.dim));
                let mut scratch = vec![0.0; if self.bank.is_some() { 0 } else { self.dim }];
                for (r, mut row) in batch.rows_mut().into_iter().enumerate() {
                    let i = start + r;
                    let z: &[f64] = match &self.bank {
                        Some(bank) => &bank[i * self.dim..(i + 1) * self.dim],
                        None => {
                            rng::fill_standard_normal(self.seed, i as u64, &mut scratch);
                            &scratch
                        }
                    };
                    for ((out, &xi), &zi) in row.iter_mut().zip(x.iter()).zip(z) {
                        *out = xi + sigma * zi;
                    }
                }
                let mut counts = vec![0usize; k];
                for y in net.predict_batch(batch.view()) {
                    counts[y] += 1;
                }
                counts
            })
            .reduce(
                || vec![0usize; k],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            )
    }

    pub fn estimate<C: Classifier + ?Sized>(
        &self,
        net: &C,
        x: ArrayView1<f64>,
        base_class: usize,
        sigma: f64,
    ) -> StabilityEstimate {
        let class_counts = self.class_counts(net, x, sigma);
        StabilityEstimate {
            sigma,
            n_samples: self.n_samples,
            gamma_hat: class_counts[base_class] as f64 / self.n_samples as f64,
            class_counts,
            base_class,
            seed: self.seed,
        }
    }
}

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("sigma must be positive and finite, got {sigma}")))
    }
}

/// Draws `n_samples` points from `N(x, σ²I)` and counts how many keep the
/// predicted class of `x`.
pub fn estimate_stability<C: Classifier + ?Sized>(
    net: &C,
    x: ArrayView1<f64>,
    sigma: f64,
    n_samples: usize,
    seed: u64,
) -> Result<StabilityEstimate> {
    check_dim(net.input_dim(), x.len())?;
    check_sigma(sigma)?;
    let probe = GaussianProbe::uncached(seed, n_samples, x.len())?;
    Ok(probe.estimate(net, x, net.predict(x), sigma))
}

/// The stability fraction alone.
pub fn compute_persistence<C: Classifier + ?Sized>(
    sigma: f64,
    x: ArrayView1<f64>,
    n_samples: usize,
    net: &C,
    seed: u64,
) -> Result<f64> {
    Ok(estimate_stability(net, x, sigma, n_samples, seed)?.gamma_hat)
}
