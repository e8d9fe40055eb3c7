//! Training with a penalty on the off-manifold part of input gradients.
//!
//! The per-example penalty is `R = ‖g‖ / ‖P_M(g)‖` with `g = ∇ₓ L`. Since
//! `R` depends on `θ` only through `g`, its parameter gradient is
//! `∂/∂θ (u · ∇ₓ L)` with `u = ∂R/∂g` held fixed, which is the directional
//! derivative of `∇_θ L(θ, x + h u)` at `h = 0`. The exact mode computes
//! that derivative by pushing the tangent `u` forward through the network
//! and back-propagating the loss adjoint together with its tangent.

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{PcaProjector, EPSILON_DENOM};
use crate::classifier::{cross_entropy, softmax_rows};
use crate::data::LabeledDataset;
use crate::error::{check_dim, Error, Result};
use crate::nn::{
    cross_entropy_gradients, fit, Activation, BatchGrad, Gradients, MlpNetwork, Objective,
    StepInfo, TrainConfig, TrainReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GradMode {
    /// Forward tangent plus two-adjoint backward pass.
    Exact,
    /// Central difference of parameter gradients along `u`.
    FiniteDifference { h: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagConfig {
    pub alpha: f64,
    pub grad_mode: GradMode,
    pub epsilon_denom: f64,
}

impl Default for MagConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            grad_mode: GradMode::Exact,
            epsilon_denom: EPSILON_DENOM,
        }
    }
}

impl MagConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha must be finite and >= 0"));
        }
        if !(self.epsilon_denom >= 0.0) {
            return Err(Error::config("epsilon_denom must be >= 0"));
        }
        if let GradMode::FiniteDifference { h } = self.grad_mode {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::config("finite-difference step must be positive"));
            }
        }
        Ok(())
    }
}

fn one_hot_residual(logits: ArrayView2<f64>, ys: &[usize]) -> (Array2<f64>, Array2<f64>) {
    let p = softmax_rows(logits);
    let mut delta = p.clone();
    for (mut row, &y) in delta.rows_mut().into_iter().zip(ys) {
        row[y] -= 1.0;
    }
    (p, delta)
}

fn relu_mask(v: &mut Array2<f64>, acts: &Array2<f64>) {
    ndarray::Zip::from(v).and(acts).for_each(|d, &a| {
        if a <= 0.0 {
            *d = 0.0;
        }
    });
}

/// Ratio term of a batch: mean of `R_i` and the parameter gradient of
/// `(scale / B) Σ R_i`.
struct RatioTerm {
    mean_ratio: f64,
    grads: Gradients,
}

/// Rows of `u_i = ∂R_i/∂g_i`, scaled by `scale / B`, and the ratios.
fn ratio_directions(
    g: &Array2<f64>,
    projector: &PcaProjector,
    scale: f64,
    epsilon_denom: f64,
) -> Result<(Array2<f64>, Vec<f64>)> {
    let b = g.nrows() as f64;
    let rho = projector.project_rows_raw(g.view());
    let mut u = Array2::zeros(g.raw_dim());
    let mut ratios = Vec::with_capacity(g.nrows());
    for ((gi, ri), mut ui) in g.rows().into_iter().zip(rho.rows()).zip(u.rows_mut()) {
        let rn = ri.dot(&ri).sqrt();
        if !(rn > epsilon_denom) {
            return Err(Error::OffManifold { norm: rn });
        }
        let gn = gi.dot(&gi).sqrt();
        // P_M(g) = (g·ρ/‖ρ‖²) ρ; equal to ρ for an orthonormal W.
        let pm = gi.dot(&ri) / rn;
        ratios.push(gn / pm.abs());
        let a = scale / (b * gn * rn);
        let c = scale * gn / (b * rn * rn * rn);
        ndarray::Zip::from(&mut ui)
            .and(&gi)
            .and(&ri)
            .for_each(|o, &gv, &rv| *o = a * gv - c * rv);
    }
    Ok((u, ratios))
}

/// `Σ_i ∂/∂θ (u_i · ∇ₓ L_i)` by tangent propagation.
fn exact_directional(
    net: &MlpNetwork,
    xs: ArrayView2<f64>,
    ys: &[usize],
    u: Array2<f64>,
) -> Gradients {
    let layers = net.layers();
    let n = layers.len();
    let pass = net.forward_pass(xs);
    let acts = &pass.acts;

    let mut tangents = Vec::with_capacity(n + 1);
    tangents.push(u);
    for (l, layer) in layers.iter().enumerate() {
        let mut z = tangents[l].dot(&layer.weight.t());
        if layer.activation == Activation::Relu {
            relu_mask(&mut z, &acts[l + 1]);
        }
        tangents.push(z);
    }

    let (p, mut delta) = one_hot_residual(acts[n].view(), ys);
    let zdot = &tangents[n];
    let mut ddot = &p * zdot;
    let s = ddot.sum_axis(Axis(1));
    ddot -= &(&p * &s.insert_axis(Axis(1)));

    let mut grads = Gradients::zeros_like(net);
    for l in (0..n).rev() {
        let w = &layers[l].weight;
        let mut gw = ddot.t().dot(&acts[l]);
        gw += &delta.t().dot(&tangents[l]);
        grads.weights[l] = gw;
        grads.biases[l] = ddot.sum_axis(Axis(0));
        if l == 0 {
            break;
        }
        let mut up = delta.dot(w);
        let mut up_dot = ddot.dot(w);
        if layers[l - 1].activation == Activation::Relu {
            relu_mask(&mut up, &acts[l]);
            relu_mask(&mut up_dot, &acts[l]);
        }
        delta = up;
        ddot = up_dot;
    }
    grads
}

/// Same quantity as [`exact_directional`] by central differences of the
/// parameter gradient along each unit `u_i / ‖u_i‖`.
fn fd_directional(
    net: &MlpNetwork,
    xs: ArrayView2<f64>,
    ys: &[usize],
    u: Array2<f64>,
    h: f64,
) -> Gradients {
    let b = xs.nrows();
    let mut unit = u;
    let mut weights = Vec::with_capacity(b);
    for mut row in unit.rows_mut() {
        let nrm = row.dot(&row).sqrt();
        weights.push(nrm);
        if nrm > 0.0 {
            row /= nrm;
        }
    }
    let plus = &xs + &(&unit * h);
    let minus = &xs - &(&unit * h);
    let stacked = concatenate![Axis(0), plus, minus];
    let labels: Vec<usize> = ys.iter().chain(ys).copied().collect();
    let pass = net.forward_pass(stacked.view());
    let (_, mut delta) = one_hot_residual(pass.logits().view(), &labels);
    for (i, mut row) in delta.rows_mut().into_iter().enumerate() {
        let w = weights[i % b] / (2.0 * h);
        row *= if i < b { w } else { -w };
    }
    net.backward(&pass, delta, true, false).0.expect("params")
}

fn ratio_term(
    net: &MlpNetwork,
    xs: ArrayView2<f64>,
    ys: &[usize],
    g: &Array2<f64>,
    projector: &PcaProjector,
    scale: f64,
    cfg: &MagConfig,
) -> Result<RatioTerm> {
    let (u, ratios) = ratio_directions(g, projector, scale, cfg.epsilon_denom)?;
    let grads = match cfg.grad_mode {
        GradMode::Exact => exact_directional(net, xs, ys, u),
        GradMode::FiniteDifference { h } => fd_directional(net, xs, ys, u, h),
    };
    Ok(RatioTerm {
        mean_ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
        grads,
    })
}

/// Mean ratio over the batch and the parameter gradient of `α · mean R`.
pub fn ratio_term_gradient(
    net: &MlpNetwork,
    xs: ArrayView2<f64>,
    ys: &[usize],
    projector: &PcaProjector,
    cfg: &MagConfig,
) -> Result<(f64, Gradients)> {
    cfg.validate()?;
    check_dim(projector.d, xs.ncols())?;
    check_dim(net.input_dim(), xs.ncols())?;
    check_dim(xs.nrows(), ys.len())?;
    for &y in ys {
        net.check_class(y)?;
    }
    let g = crate::classifier::Classifier::loss_gradient_batch(net, xs, ys);
    let t = ratio_term(net, xs, ys, &g, projector, cfg.alpha, cfg)?;
    Ok((t.mean_ratio, t.grads))
}

/// Mean cross-entropy plus `alpha` times the mean gradient ratio.
///
/// Batches containing an example whose gradient has no on-manifold part
/// are skipped and counted.
#[derive(Debug, Clone)]
pub struct MagObjective<'p> {
    pub projector: &'p PcaProjector,
    pub cfg: MagConfig,
    pub off_manifold_batches: usize,
    /// Mean ratio of the most recent batch.
    pub last_ratio: Option<f64>,
}

impl<'p> MagObjective<'p> {
    pub fn new(projector: &'p PcaProjector, cfg: MagConfig) -> Self {
        Self {
            projector,
            cfg,
            off_manifold_batches: 0,
            last_ratio: None,
        }
    }
}

impl Objective for MagObjective<'_> {
    fn batch(
        &mut self,
        net: &MlpNetwork,
        xs: ArrayView2<f64>,
        ys: &[usize],
        _step: &StepInfo,
    ) -> Result<Option<BatchGrad>> {
        if self.cfg.alpha == 0.0 {
            let (loss, grads) = cross_entropy_gradients(net, xs, ys);
            return Ok(Some(BatchGrad { loss, grads }));
        }
        let b = ys.len() as f64;
        let pass = net.forward_pass(xs);
        let ce = pass
            .logits()
            .rows()
            .into_iter()
            .zip(ys)
            .map(|(z, &y)| cross_entropy(z, y))
            .sum::<f64>()
            / b;
        let (_, delta) = one_hot_residual(pass.logits().view(), ys);
        let (grads, g) = net.backward(&pass, delta, true, true);
        let mut grads = grads.expect("params");
        grads.scale(1.0 / b);
        let g = g.expect("input");
        match ratio_term(net, xs, ys, &g, self.projector, self.cfg.alpha, &self.cfg) {
            Ok(t) => {
                grads.add_scaled(&t.grads, 1.0);
                self.last_ratio = Some(t.mean_ratio);
                Ok(Some(BatchGrad {
                    loss: ce + self.cfg.alpha * t.mean_ratio,
                    grads,
                }))
            }
            Err(Error::OffManifold { norm }) => {
                log::debug!("skipping batch: |rho| = {norm:e}");
                self.off_manifold_batches += 1;
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }
}

/// Trains `net` on the MAG objective.
pub fn mag_train(
    net: &mut MlpNetwork,
    data: &LabeledDataset,
    projector: &PcaProjector,
    cfg: &MagConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    check_dim(projector.d, data.dim())?;
    let mut obj = MagObjective::new(projector, *cfg);
    fit(net, data, train_cfg, &mut obj)
}

/// Exact and finite-difference gradients of the mean ratio (alpha = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagGradientCheck {
    pub mean_ratio: f64,
    pub exact: Vec<f64>,
    pub finite_difference: Vec<f64>,
    /// `‖exact − fd‖ / max(‖exact‖, ‖fd‖)`.
    pub relative_error: f64,
}

pub fn mag_gradient_check(
    net: &MlpNetwork,
    xs: ArrayView2<f64>,
    ys: &[usize],
    projector: &PcaProjector,
    h: f64,
) -> Result<MagGradientCheck> {
    let base = MagConfig {
        alpha: 1.0,
        grad_mode: GradMode::Exact,
        epsilon_denom: EPSILON_DENOM,
    };
    let (mean_ratio, exact) = ratio_term_gradient(net, xs, ys, projector, &base)?;
    let fd_cfg = MagConfig {
        grad_mode: GradMode::FiniteDifference { h },
        ..base
    };
    let (_, fd) = ratio_term_gradient(net, xs, ys, projector, &fd_cfg)?;
    let (exact, fd) = (exact.flatten(), fd.flatten());
    let diff = Array1::from_iter(exact.iter().zip(&fd).map(|(a, b)| a - b));
    let na = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
    let denom = na.max(nb);
    let relative_error = if denom == 0.0 {
        0.0
    } else {
        diff.dot(&diff).sqrt() / denom
    };
    Ok(MagGradientCheck {
        mean_ratio,
        exact,
        finite_difference: fd,
        relative_error,
    })
}
