//! Linear data manifolds, gradient alignment and manifold-aligned training.
//!
//! The manifold is the span of orthonormal rows `W` fitted by per-class
//! PCA. An input gradient `g` is split into its on-manifold part
//! `ρ = g Wᵀ W` and the rest; the ratio `‖g‖ / ‖P_M(g)‖` measures how far
//! the gradient leaves the manifold and can be penalized during training.

mod mag;
mod pca;
mod robust;

pub use mag::{
    mag_gradient_check, mag_train, ratio_term_gradient, GradMode, MagConfig, MagGradientCheck,
    MagObjective,
};
pub use pca::{
    dataset_fingerprint, explained_variance, fit_pca, orthonormalize, project_dataset,
    PcaProjector, IN_SPAN_TOLERANCE,
};
pub use robust::{
    adversarial_train, alignment_histogram, alignment_scores, robustness_curve,
    AdversarialObjective, CurveAttack, Histogram, RobustnessPoint,
};

use ndarray::{Array1, ArrayView1};

use crate::error::{check_dim, Error, Result};

/// Default guard on `‖ρ‖` below which the ratio is undefined.
pub const EPSILON_DENOM: f64 = 1e-12;

fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// `ρ = g Wᵀ W`.
pub fn rho(grad: ArrayView1<f64>, projector: &PcaProjector) -> Result<Array1<f64>> {
    check_dim(projector.d, grad.len())?;
    let w = projector.w();
    Ok(w.dot(&grad).dot(&w))
}

/// Component of `grad` along `ρ`: `(g·ρ / ‖ρ‖) · ρ / ‖ρ‖`.
///
/// Fails with [`Error::OffManifold`] when `‖ρ‖ <= epsilon_denom`.
pub fn mag_projection(
    grad: ArrayView1<f64>,
    projector: &PcaProjector,
    epsilon_denom: f64,
) -> Result<Array1<f64>> {
    let r = rho(grad, projector)?;
    let rn = norm(r.view());
    if !(rn > epsilon_denom) {
        return Err(Error::OffManifold { norm: rn });
    }
    let unit = r / rn;
    let c = grad.dot(&unit);
    Ok(unit * c)
}

/// `‖g‖ / ‖P_M(g)‖`; at least 1, infinite in the limit of a gradient
/// orthogonal to the manifold.
pub fn mag_ratio(grad: ArrayView1<f64>, projector: &PcaProjector, epsilon_denom: f64) -> Result<f64> {
    let p = mag_projection(grad, projector, epsilon_denom)?;
    Ok(norm(grad) / norm(p.view()))
}

/// Cosine between `g` and `ρ`, in `[0, 1]`. A gradient with no
/// on-manifold part scores 0; a zero gradient is an error.
pub fn cosine_alignment(grad: ArrayView1<f64>, projector: &PcaProjector) -> Result<f64> {
    let gn = norm(grad);
    if gn == 0.0 {
        return Err(Error::Numeric("zero gradient has no direction".into()));
    }
    let r = rho(grad, projector)?;
    let rn = norm(r.view());
    if rn == 0.0 {
        return Ok(0.0);
    }
    Ok((grad.dot(&r) / (gn * rn)).clamp(0.0, 1.0))
}
