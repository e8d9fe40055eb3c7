//! Gradient-based adversarial attacks.
//!
//! Sign conventions: targeted attacks descend the cross-entropy of the
//! target class, untargeted attacks ascend the cross-entropy of the given
//! label. Every attack works on batches (one example per row); the
//! single-example functions are thin wrappers.

mod iterative;
mod penalty;

pub use iterative::Iterative;
pub use penalty::Penalty;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L2,
    Linf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMethod {
    Fgsm,
    Rfgsm,
    /// Iterative sign steps; with a target and no radius this is IGSM.
    Bim,
    Mifgsm,
    Pgd,
    Penalty,
}

impl AttackMethod {
    pub fn name(self) -> &'static str {
        match self {
            AttackMethod::Fgsm => "fgsm",
            AttackMethod::Rfgsm => "rfgsm",
            AttackMethod::Bim => "bim",
            AttackMethod::Mifgsm => "mifgsm",
            AttackMethod::Pgd => "pgd",
            AttackMethod::Penalty => "penalty",
        }
    }
}

/// Box `[lo, hi]` applied to every coordinate.
pub type ClipBox = Option<(f64, f64)>;

/// The MNIST pixel range.
pub const PIXEL_BOX: ClipBox = Some((0.0, 1.0));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub method: AttackMethod,
    /// Perturbation budget. Iterative targeted attacks treat a value of
    /// zero as "no budget".
    pub epsilon: f64,
    pub step_size: f64,
    pub iterations: usize,
    pub target: Option<usize>,
    pub norm: Norm,
    pub momentum_decay: f64,
    pub clip: ClipBox,
    pub seed: u64,
    /// Stop iterating on a row once it succeeds.
    pub early_stop: bool,
    /// Penalty weights tried by [`AttackMethod::Penalty`], ascending.
    pub c_grid: Vec<f64>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            method: AttackMethod::Bim,
            epsilon: 0.0,
            step_size: 0.01,
            iterations: 100,
            target: None,
            norm: Norm::Linf,
            momentum_decay: 1.0,
            clip: PIXEL_BOX,
            seed: 0,
            early_stop: true,
            c_grid: default_c_grid(),
        }
    }
}

/// Log-spaced penalty weights from 10⁻³ to 10².
pub fn default_c_grid() -> Vec<f64> {
    (0..11).map(|k| 10f64.powf(-3.0 + 0.5 * k as f64)).collect()
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config("epsilon must be finite and >= 0"));
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::config("step size must be finite and >= 0"));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations must be >= 1"));
        }
        if let Some((lo, hi)) = self.clip {
            if !(lo <= hi) {
                return Err(Error::config("clip box needs lo <= hi"));
            }
        }
        if self.method == AttackMethod::Penalty {
            if self.c_grid.is_empty()
                || self.c_grid.iter().any(|&c| !(c > 0.0))
                || self.c_grid.windows(2).any(|w| w[0] >= w[1])
            {
                return Err(Error::config("c grid must be ascending and positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub x_adv: Array1<f64>,
    pub success: bool,
    /// Prediction on the clean input.
    pub original: usize,
    pub predicted: usize,
    pub distortion: f64,
    pub iterations_used: usize,
}

/// `‖x − x_adv‖₂ / √n`.
pub fn distortion(x: ArrayView1<f64>, x_adv: ArrayView1<f64>) -> f64 {
    assert_eq!(x.len(), x_adv.len(), "distortion needs equal dimensions");
    if x.is_empty() {
        return 0.0;
    }
    let ss: f64 = x.iter().zip(x_adv).map(|(a, b)| (a - b) * (a - b)).sum();
    (ss / x.len() as f64).sqrt()
}

/// `sign(v)` with `sign(0) = 0`.
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn clip_row(mut row: ndarray::ArrayViewMut1<f64>, clip: ClipBox) {
    if let Some((lo, hi)) = clip {
        row.mapv_inplace(|v| v.clamp(lo, hi));
    }
}

/// Projects `x` onto the `norm`-ball of radius `eps` around `x0`.
pub(crate) fn project_ball(
    mut x: ndarray::ArrayViewMut1<f64>,
    x0: ArrayView1<f64>,
    eps: f64,
    norm: Norm,
) {
    match norm {
        Norm::Linf => {
            for (v, &c) in x.iter_mut().zip(x0) {
                *v = v.clamp(c - eps, c + eps);
            }
        }
        Norm::L2 => {
            let n: f64 = x
                .iter()
                .zip(x0)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if n > eps {
                let s = eps / n;
                for (v, &c) in x.iter_mut().zip(x0) {
                    *v = c + (*v - c) * s;
                }
            }
        }
    }
}

/// Targeted: prediction equals the target. Untargeted: prediction differs
/// from the clean prediction.
fn succeeded(targeted: bool, predicted: usize, goal: usize, original: usize) -> bool {
    if targeted {
        predicted == goal
    } else {
        predicted != original
    }
}

fn finish<C: Classifier + ?Sized>(
    net: &C,
    x0: ArrayView2<f64>,
    x_adv: Array2<f64>,
    originals: &[usize],
    goals: &[usize],
    targeted: bool,
    iterations: Vec<usize>,
) -> Vec<AttackResult> {
    let preds = net.predict_batch(x_adv.view());
    x_adv
        .axis_iter(Axis(0))
        .enumerate()
        .map(|(i, row)| AttackResult {
            distortion: distortion(x0.row(i), row),
            x_adv: row.to_owned(),
            success: succeeded(targeted, preds[i], goals[i], originals[i]),
            original: originals[i],
            predicted: preds[i],
            iterations_used: iterations[i],
        })
        .collect()
}

/// One-step attacks: `x + s·ε·sign(∇L)` with `s = +1` untargeted and
/// `s = −1` targeted. `start` (if given) replaces `x` as the point where
/// the gradient is taken and the step begins.
fn one_step<C: Classifier + ?Sized>(
    net: &C,
    start: ArrayView2<f64>,
    labels: &[usize],
    eps: f64,
    targeted: bool,
    clip: ClipBox,
) -> Array2<f64> {
    let grad = net.loss_gradient_batch(start, labels);
    let s = if targeted { -eps } else { eps };
    let mut x = start.to_owned();
    ndarray::Zip::from(&mut x)
        .and(&grad)
        .for_each(|v, &g| *v += s * sign(g));
    for row in x.rows_mut() {
        clip_row(row, clip);
    }
    x
}

/// FGSM on a batch, untargeted with respect to `labels`.
pub fn fgsm_batch<C: Classifier + ?Sized>(
    net: &C,
    xs: ArrayView2<f64>,
    labels: &[usize],
    eps: f64,
    clip: ClipBox,
) -> Array2<f64> {
    one_step(net, xs, labels, eps, false, clip)
}

pub fn fgsm<C: Classifier + ?Sized>(
    net: &C,
    x: ArrayView1<f64>,
    y_true: usize,
    eps: f64,
    clip: ClipBox,
) -> Result<AttackResult> {
    let cfg = AttackConfig {
        method: AttackMethod::Fgsm,
        epsilon: eps,
        clip,
        ..AttackConfig::default()
    };
    run_attack(net, x, y_true, &cfg)
}

/// Targeted iterative sign attack without a perturbation budget.
pub fn igsm_targeted<C: Classifier + ?Sized>(
    net: &C,
    x: ArrayView1<f64>,
    target: usize,
    step: f64,
    iters: usize,
    clip: ClipBox,
) -> Result<AttackResult> {
    check_dim(net.input_dim(), x.len())?;
    check_class(net, target)?;
    let cfg = AttackConfig {
        method: AttackMethod::Bim,
        epsilon: 0.0,
        step_size: step,
        iterations: iters,
        target: Some(target),
        clip,
        ..AttackConfig::default()
    };
    cfg.validate()?;
    let xs = x.insert_axis(Axis(0));
    Ok(attack_rows(net, xs, &[target], true, &cfg, 0).remove(0))
}

pub fn pgd<C: Classifier + ?Sized>(
    net: &C,
    x: ArrayView1<f64>,
    y: usize,
    eps: f64,
    step: f64,
    iters: usize,
    norm: Norm,
    clip: ClipBox,
    seed: u64,
) -> Result<AttackResult> {
    let cfg = AttackConfig {
        method: AttackMethod::Pgd,
        epsilon: eps,
        step_size: step,
        iterations: iters,
        norm,
        clip,
        seed,
        ..AttackConfig::default()
    };
    run_attack(net, x, y, &cfg)
}

pub fn mifgsm<C: Classifier + ?Sized>(
    net: &C,
    x: ArrayView1<f64>,
    y: usize,
    eps: f64,
    step: f64,
    iters: usize,
    mu: f64,
    clip: ClipBox,
) -> Result<AttackResult> {
    let cfg = AttackConfig {
        method: AttackMethod::Mifgsm,
        epsilon: eps,
        step_size: step,
        iterations: iters,
        momentum_decay: mu,
        clip,
        ..AttackConfig::default()
    };
    run_attack(net, x, y, &cfg)
}

pub fn penalty_attack<C: Classifier + ?Sized>(
    net: &C,
    x: ArrayView1<f64>,
    target: usize,
    c_grid: &[f64],
    inner_iters: usize,
    step: f64,
    clip: ClipBox,
) -> Result<AttackResult> {
    check_dim(net.input_dim(), x.len())?;
    check_class(net, target)?;
    let cfg = AttackConfig {
        method: AttackMethod::Penalty,
        step_size: step,
        iterations: inner_iters,
        target: Some(target),
        clip,
        c_grid: c_grid.to_vec(),
        ..AttackConfig::default()
    };
    cfg.validate()?;
    let xs = x.insert_axis(Axis(0));
    Ok(attack_rows(net, xs, &[target], true, &cfg, 0).remove(0))
}

fn check_class<C: Classifier + ?Sized>(net: &C, class: usize) -> Result<()> {
    if class < net.num_classes() {
        Ok(())
    } else {
        Err(Error::InvalidClass {
            class,
            num_classes: net.num_classes(),
        })
    }
}

/// Runs `cfg` on one example with true label `y`; `cfg.target` selects a
/// targeted attack.
pub fn run_attack<C: Classifier + ?Sized>(
    net: &C,
    x: ArrayView1<f64>,
    y: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let targets = cfg.target.map(|t| vec![t]);
    Ok(attack_batch(net, x.insert_axis(Axis(0)), &[y], targets.as_deref(), cfg)?.remove(0))
}

/// Runs `cfg` on every row of `xs`. `targets` (per row) overrides
/// `cfg.target`. Row `i` draws its randomness from `cfg.seed ^ i`.
pub fn attack_batch<C: Classifier + ?Sized>(
    net: &C,
    xs: ArrayView2<f64>,
    labels: &[usize],
    targets: Option<&[usize]>,
    cfg: &AttackConfig,
) -> Result<Vec<AttackResult>> {
    cfg.validate()?;
    check_dim(net.input_dim(), xs.ncols())?;
    check_dim(xs.nrows(), labels.len())?;
    for &y in labels {
        check_class(net, y)?;
    }
    let targets: Option<Vec<usize>> = match (targets, cfg.target) {
        (Some(t), _) => {
            check_dim(xs.nrows(), t.len())?;
            Some(t.to_vec())
        }
        (None, Some(t)) => Some(vec![t; xs.nrows()]),
        (None, None) => None,
    };
    if let Some(t) = &targets {
        for (&target, &y) in t.iter().zip(labels) {
            check_class(net, target)?;
            if target == y {
                return Err(Error::config(format!(
                    "target {target} equals the true label"
                )));
            }
        }
    }
    let goals = targets.as_deref().unwrap_or(labels);
    Ok(attack_rows(net, xs, goals, targets.is_some(), cfg, 0))
}

/// Dispatch without validation. `goals` holds targets for targeted runs
/// and true labels otherwise.
///
/// A targeted iterative attack with `epsilon == 0` has no budget (IGSM).
pub(crate) fn attack_rows<C: Classifier + ?Sized>(
    net: &C,
    xs: ArrayView2<f64>,
    goals: &[usize],
    targeted: bool,
    cfg: &AttackConfig,
    first_row: u64,
) -> Vec<AttackResult> {
    let originals = net.predict_batch(xs);
    let n = xs.nrows();
    match cfg.method {
        AttackMethod::Fgsm => {
            let x = one_step(net, xs, goals, cfg.epsilon, targeted, cfg.clip);
            finish(net, xs, x, &originals, goals, targeted, vec![1; n])
        }
        AttackMethod::Rfgsm => {
            // Random sign step of size α, then a gradient step of ε − α.
            let alpha = cfg.step_size.min(cfg.epsilon);
            let mut start = xs.to_owned();
            for (i, mut row) in start.rows_mut().into_iter().enumerate() {
                let mut z = vec![0.0; row.len()];
                crate::rng::fill_standard_normal(cfg.seed ^ (first_row + i as u64), 0, &mut z);
                for (v, zi) in row.iter_mut().zip(z) {
                    *v += alpha * sign(zi);
                }
                clip_row(row, cfg.clip);
            }
            let x = one_step(net, start.view(), goals, cfg.epsilon - alpha, targeted, cfg.clip);
            finish(net, xs, x, &originals, goals, targeted, vec![1; n])
        }
        AttackMethod::Bim | AttackMethod::Mifgsm | AttackMethod::Pgd => {
            let it = Iterative {
                targeted,
                radius: (cfg.epsilon > 0.0 || !targeted).then_some(cfg.epsilon),
                norm: if cfg.method == AttackMethod::Pgd {
                    cfg.norm
                } else {
                    Norm::Linf
                },
                step: cfg.step_size,
                iterations: cfg.iterations,
                momentum: (cfg.method == AttackMethod::Mifgsm).then_some(cfg.momentum_decay),
                random_start: (cfg.method == AttackMethod::Pgd).then_some(cfg.seed),
                clip: cfg.clip,
                early_stop: cfg.early_stop,
            };
            let (x, used) = it.run(net, xs, goals, &originals, first_row);
            finish(net, xs, x, &originals, goals, targeted, used)
        }
        AttackMethod::Penalty => {
            let p = Penalty {
                targeted,
                c_grid: cfg.c_grid.clone(),
                iterations: cfg.iterations,
                step: cfg.step_size,
                clip: cfg.clip,
            };
            let (x, used) = p.run(net, xs, goals, &originals);
            finish(net, xs, x, &originals, goals, targeted, used)
        }
    }
}
