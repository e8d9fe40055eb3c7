use ndarray::ArrayView1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimator::GaussianProbe;
use crate::classifier::Classifier;
use crate::error::{check_dim, Error, Result};
use crate::rng;

pub const RANGE_START: (f64, f64) = (0.5, 1.5);

/// How Monte Carlo draws are shared between the stability evaluations of
/// one persistence search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSchedule {
    /// Every evaluation reuses the same draws, scaled by its σ.
    #[default]
    Common,
    /// Evaluation `k` uses fresh draws seeded by `(seed, k)`.
    Fresh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceConfig {
    pub gamma: f64,
    pub n_samples: usize,
    pub max_steps: usize,
    pub precision: f64,
    /// Maximum halvings of `σ_min` (and separately doublings of `σ_max`).
    pub range_cap: usize,
    pub seed: u64,
    #[serde(default)]
    pub schedule: NoiseSchedule,
}

impl Default for PersistenceConfig {
    fn default() -> Self {
        Self {
            gamma: 0.7,
            n_samples: 1000,
            max_steps: 30,
            precision: 0.01,
            range_cap: 60,
            seed: 0,
            schedule: NoiseSchedule::Common,
        }
    }
}

impl PersistenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.precision > 0.0) {
            return Err(Error::config("precision must be positive"));
        }
        if self.n_samples == 0 {
            return Err(Error::config("number of samples must be >= 1"));
        }
        if self.range_cap == 0 {
            return Err(Error::config("range cap must be >= 1"));
        }
        Ok(())
    }
}

/// A persistence value that is only known as a bound.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "bound", rename_all = "snake_case")]
pub enum Censoring {
    #[default]
    None,
    /// Still γ-stable at this σ after the maximum number of doublings.
    AtLeast(f64),
    /// Not γ-stable even at this σ after the maximum number of halvings.
    AtMost(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub gamma_at_min: f64,
    pub gamma_at_max: f64,
    pub censored: Censoring,
    pub evaluations: usize,
}

/// One bisection evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BisectionStep {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma: f64,
    pub gamma_est: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceResult {
    pub sigma_star: f64,
    pub gamma: f64,
    /// Bisection evaluations performed.
    pub steps: usize,
    /// True when the precision test stopped the search.
    pub converged: bool,
    pub censored: Censoring,
    pub bracket: Bracket,
    pub trace: Vec<BisectionStep>,
}

impl PersistenceResult {
    /// `σ*` as printed in reports: `≥` / `≤` prefixes mark censored values.
    pub fn display_value(&self) -> String {
        match self.censored {
            Censoring::None => format!("{}", self.sigma_star),
            Censoring::AtLeast(b) => format!(">={b}"),
            Censoring::AtMost(b) => format!("<={b}"),
        }
    }
}

struct Evaluator<'a, 'x, C: ?Sized> {
    net: &'a C,
    x: ArrayView1<'x, f64>,
    base: usize,
    cfg: &'a PersistenceConfig,
    common: Option<GaussianProbe>,
    evaluations: usize,
}

impl<'a, 'x, C: Classifier + ?Sized> Evaluator<'a, 'x, C> {
    fn new(net: &'a C, x: ArrayView1<'x, f64>, cfg: &'a PersistenceConfig) -> Result<Self> {
        cfg.validate()?;
        check_dim(net.input_dim(), x.len())?;
        let common = match cfg.schedule {
            NoiseSchedule::Common => Some(GaussianProbe::new(cfg.seed, cfg.n_samples, x.len())?),
            NoiseSchedule::Fresh => None,
        };
        Ok(Self {
            net,
            x,
            base: net.predict(x),
            cfg,
            common,
            evaluations: 0,
        })
    }

    fn gamma(&mut self, sigma: f64) -> f64 {
        let k = self.evaluations as u64;
        self.evaluations += 1;
        match &self.common {
            Some(p) => p.estimate(self.net, self.x, self.base, sigma).gamma_hat,
            None => {
                let p = GaussianProbe::uncached(
                    rng::derive_seed(self.cfg.seed, k),
                    self.cfg.n_samples,
                    self.x.len(),
                )
                .expect("validated");
                p.estimate(self.net, self.x, self.base, sigma).gamma_hat
            }
        }
    }

    fn rangefinder(&mut self) -> Bracket {
        let gamma = self.cfg.gamma;
        let (mut lo, mut hi) = RANGE_START;
        let mut g_lo = self.gamma(lo);
        let mut g_hi = self.gamma(hi);
        let (mut halvings, mut doublings) = (0, 0);
        let mut censored = Censoring::None;
        while g_lo < gamma || g_hi > gamma {
            if g_lo < gamma {
                if halvings == self.cfg.range_cap {
                    censored = Censoring::AtMost(lo);
                    break;
                }
                lo *= 0.5;
                halvings += 1;
                g_lo = self.gamma(lo);
            }
            if g_hi > gamma {
                if doublings == self.cfg.range_cap {
                    censored = Censoring::AtLeast(hi);
                    break;
                }
                hi *= 2.0;
                doublings += 1;
                g_hi = self.gamma(hi);
            }
        }
        Bracket {
            sigma_min: lo,
            sigma_max: hi,
            gamma_at_min: g_lo,
            gamma_at_max: g_hi,
            censored,
            evaluations: self.evaluations,
        }
    }
}

/// Expands `[0.5, 1.5]` by halving the lower and doubling the upper end
/// until the point is γ-stable at `σ_min` and not at `σ_max`.
pub fn rangefinder<C: Classifier + ?Sized>(
    net: &C,
    x: ArrayView1<f64>,
    cfg: &PersistenceConfig,
) -> Result<Bracket> {
    Ok(Evaluator::new(net, x, cfg)?.rangefinder())
}

/// γ-persistence by bisection on the Monte Carlo stability estimate.
///
/// Stops when `|γ_est(σ) − γ| < precision` or after `max_steps − 1`
/// evaluations, returning the last midpoint.
pub fn bracketing<C: Classifier + ?Sized>(
    net: &C,
    x: ArrayView1<f64>,
    cfg: &PersistenceConfig,
) -> Result<PersistenceResult> {
    let mut ev = Evaluator::new(net, x, cfg)?;
    let bracket = ev.rangefinder();
    match bracket.censored {
        Censoring::None => {}
        Censoring::AtLeast(b) | Censoring::AtMost(b) => {
            return Ok(PersistenceResult {
                sigma_star: b,
                gamma: cfg.gamma,
                steps: 0,
                converged: false,
                censored: bracket.censored,
                bracket,
                trace: Vec::new(),
            })
        }
    }
    let (mut lo, mut hi) = (bracket.sigma_min, bracket.sigma_max);
    let mut sigma = 0.5 * (lo + hi);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut count = 1;
    while count < cfg.max_steps {
        sigma = 0.5 * (lo + hi);
        let g = ev.gamma(sigma);
        trace.push(BisectionStep {
            sigma_min: lo,
            sigma_max: hi,
            sigma,
            gamma_est: g,
        });
        if (g - cfg.gamma).abs() < cfg.precision {
            converged = true;
            break;
        } else if g > cfg.gamma {
            lo = sigma;
        } else {
            hi = sigma;
        }
        count += 1;
    }
    Ok(PersistenceResult {
        sigma_star: sigma,
        gamma: cfg.gamma,
        steps: trace.len(),
        converged,
        censored: Censoring::None,
        bracket,
        trace,
    })
}

/// Persistence of every row of `xs`; row `i` uses seed `derive_seed(seed, i)`.
pub fn bracketing_batch<C: Classifier + ?Sized>(
    net: &C,
    xs: ndarray::ArrayView2<f64>,
    cfg: &PersistenceConfig,
) -> Vec<Result<PersistenceResult>> {
    (0..xs.nrows())
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = rng::derive_seed(cfg.seed, i as u64);
            bracketing(net, xs.row(i), &c)
        })
        .collect()
}
