//! Adversarial training and robustness evaluation.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{cosine_alignment, PcaProjector};
use crate::attacks::{attack_rows, fgsm_batch, AttackConfig, AttackMethod, ClipBox, Penalty};
use crate::classifier::Classifier;
use crate::data::LabeledDataset;
use crate::error::{check_dim, Error, Result};
use crate::nn::{
    fit, BatchGrad, CrossEntropy, MlpNetwork, Objective, StepInfo, TrainConfig, TrainReport,
};

const EVAL_CHUNK: usize = 500;

/// Wraps an objective so every batch is augmented with adversarial copies
/// of its rows, generated against the current network and labelled with
/// the clean labels.
#[derive(Debug, Clone)]
pub struct AdversarialObjective<O> {
    pub inner: O,
    /// Untargeted attack used to build the copies; its seed is replaced by
    /// the batch seed.
    pub attack: AttackConfig,
}

impl<O: Objective> AdversarialObjective<O> {
    pub fn new(inner: O, attack: AttackConfig) -> Result<Self> {
        attack.validate()?;
        if attack.target.is_some() {
            return Err(Error::config("adversarial training uses untargeted attacks"));
        }
        Ok(Self { inner, attack })
    }

    pub fn adversarial_copies(
        &self,
        net: &MlpNetwork,
        xs: ArrayView2<f64>,
        ys: &[usize],
        seed: u64,
    ) -> Array2<f64> {
        let cfg = AttackConfig {
            seed,
            ..self.attack.clone()
        };
        let results = attack_rows(net, xs, ys, false, &cfg, 0);
        let mut out = Array2::zeros(xs.raw_dim());
        for (mut row, r) in out.rows_mut().into_iter().zip(results) {
            row.assign(&r.x_adv);
        }
        out
    }
}

impl<O: Objective> Objective for AdversarialObjective<O> {
    fn batch(
        &mut self,
        net: &MlpNetwork,
        xs: ArrayView2<f64>,
        ys: &[usize],
        step: &StepInfo,
    ) -> Result<Option<BatchGrad>> {
        let adv = self.adversarial_copies(net, xs, ys, step.seed);
        let both = concatenate![Axis(0), xs, adv];
        let labels: Vec<usize> = ys.iter().chain(ys).copied().collect();
        self.inner.batch(net, both.view(), &labels, step)
    }
}

/// Cross-entropy training on batches augmented by `attack`.
pub fn adversarial_train(
    net: &mut MlpNetwork,
    data: &LabeledDataset,
    attack: &AttackConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainReport> {
    let mut obj = AdversarialObjective::new(CrossEntropy, attack.clone())?;
    fit(net, data, train_cfg, &mut obj)
}

/// How a robustness curve perturbs the test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveAttack {
    /// One FGSM step of size ε per grid point.
    Fgsm { epsilons: Vec<f64>, clip: ClipBox },
    /// Untargeted penalty attack over a grid of ℓ2 weights; the curve
    /// reports, for each ε, the fraction of examples that are classified
    /// correctly and have no adversarial point within ℓ2 distance ε among
    /// all iterates.
    Penalty {
        epsilons: Vec<f64>,
        c_grid: Vec<f64>,
        iterations: usize,
        step: f64,
        clip: ClipBox,
    },
}

impl CurveAttack {
    pub fn name(&self) -> &'static str {
        match self {
            CurveAttack::Fgsm { .. } => "fgsm",
            CurveAttack::Penalty { .. } => "pgd",
        }
    }

    pub fn epsilons(&self) -> &[f64] {
        match self {
            CurveAttack::Fgsm { epsilons, .. } | CurveAttack::Penalty { epsilons, .. } => epsilons,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPoint {
    pub epsilon: f64,
    pub accuracy: f64,
}

/// Accuracy under attack at each ε of the grid.
pub fn robustness_curve<C: Classifier + ?Sized>(
    net: &C,
    data: &LabeledDataset,
    attack: &CurveAttack,
) -> Result<Vec<RobustnessPoint>> {
    check_dim(net.input_dim(), data.dim())?;
    if data.is_empty() {
        return Err(Error::config("robustness curve needs data"));
    }
    if attack.epsilons().iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(Error::config("epsilons must be finite and >= 0"));
    }
    let n = data.len();
    match attack {
        CurveAttack::Fgsm { epsilons, clip } => {
            let mut correct = vec![0usize; epsilons.len()];
            for start in (0..n).step_by(EVAL_CHUNK) {
                let end = (start + EVAL_CHUNK).min(n);
                let xs = data.inputs().slice_move(s![start..end, ..]);
                let ys = &data.labels()[start..end];
                for (k, &eps) in epsilons.iter().enumerate() {
                    let adv = fgsm_batch(net, xs, ys, eps, *clip);
                    correct[k] += net
                        .predict_batch(adv.view())
                        .iter()
                        .zip(ys)
                        .filter(|(p, y)| p == y)
                        .count();
                }
            }
            Ok(epsilons
                .iter()
                .zip(correct)
                .map(|(&epsilon, c)| RobustnessPoint {
                    epsilon,
                    accuracy: c as f64 / n as f64,
                })
                .collect())
        }
        CurveAttack::Penalty {
            epsilons,
            c_grid,
            iterations,
            step,
            clip,
        } => {
            let cfg = AttackConfig {
                method: AttackMethod::Penalty,
                iterations: *iterations,
                step_size: *step,
                clip: *clip,
                c_grid: c_grid.clone(),
                ..AttackConfig::default()
            };
            cfg.validate()?;
            let dists = min_adversarial_distances(net, data, c_grid, *iterations, *step, *clip);
            Ok(epsilons
                .iter()
                .map(|&epsilon| RobustnessPoint {
                    epsilon,
                    accuracy: dists.iter().filter(|&&d| d > epsilon).count() as f64 / n as f64,
                })
                .collect())
        }
    }
}

/// Smallest ℓ2 distance of a misclassified iterate per example: 0 for
/// examples that are already wrong, infinite when no iterate succeeded.
pub fn min_adversarial_distances<C: Classifier + ?Sized>(
    net: &C,
    data: &LabeledDataset,
    c_grid: &[f64],
    iterations: usize,
    step: f64,
    clip: ClipBox,
) -> Vec<f64> {
    let attack = Penalty {
        targeted: false,
        c_grid: c_grid.to_vec(),
        iterations,
        step,
        clip,
    };
    let n = data.len();
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(n);
        let xs = data.inputs().slice_move(s![start..end, ..]);
        let ys = &data.labels()[start..end];
        // Measuring success against the label makes wrong clean
        // predictions count as adversarial at distance 0.
        let (best, _) = attack.run(net, xs, ys, ys);
        let clean = net.predict_batch(xs);
        let preds = net.predict_batch(best.view());
        for (i, (&p, &y)) in preds.iter().zip(ys).enumerate() {
            if clean[i] != y {
                out.push(0.0);
            } else if p == y {
                out.push(f64::INFINITY);
            } else {
                let d = &best.row(i) - &xs.row(i);
                out.push(d.dot(&d).sqrt());
            }
        }
    }
    out
}

/// Cosine alignment of each example's loss gradient (at its label) with
/// the manifold. Examples with a zero gradient are left out.
pub fn alignment_scores<C: Classifier + ?Sized>(
    net: &C,
    data: &LabeledDataset,
    projector: &PcaProjector,
) -> Result<Vec<f64>> {
    check_dim(projector.d, data.dim())?;
    check_dim(net.input_dim(), data.dim())?;
    let mut out = Vec::with_capacity(data.len());
    for start in (0..data.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(data.len());
        let g = net.loss_gradient_batch(
            data.inputs().slice(s![start..end, ..]),
            &data.labels()[start..end],
        );
        for row in g.rows() {
            match cosine_alignment(row, projector) {
                Ok(c) => out.push(c),
                Err(Error::Numeric(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width histogram of values in `[0, 1]`; 1 falls in the last bin.
pub fn alignment_histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::config("histogram needs at least one bin"));
    }
    let edges: Vec<f64> = (0..=bins).map(|k| k as f64 / bins as f64).collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Numeric(format!("alignment {v} outside [0, 1]")));
        }
        let k = ((v * bins as f64) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Ok(Histogram { edges, counts })
}
