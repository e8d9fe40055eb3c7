use std::f64::consts::FRAC_PI_2;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use super::{bisect_boundary, estimate_normal, BoundaryPoint, NormalConfig};
use crate::classifier::Classifier;
use crate::error::{Error, Result};
use crate::rng;

/// Angle between `v` and the boundary with unit-free `normal`: zero when
/// `v` lies in the boundary, `π/2` when it is parallel to the normal.
pub fn angle_between(v: ArrayView1<f64>, normal: ArrayView1<f64>) -> Result<f64> {
    let nv = v.dot(&v).sqrt();
    let nn = normal.dot(&normal).sqrt();
    if !(nv > 0.0) || !(nn > 0.0) {
        return Err(Error::Numeric("angle with a zero vector is undefined".into()));
    }
    let cos = (v.dot(&normal).abs() / (nv * nn)).min(1.0);
    Ok((FRAC_PI_2 - cos.acos()).clamp(0.0, FRAC_PI_2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleMode {
    /// The segment direction `x1 − x0`.
    Interpolant,
    /// The loss gradient at `x0` for its label.
    TrainGradient,
    /// The loss gradient at the boundary point toward the far-side class.
    AdvGradient,
}

impl AngleMode {
    pub fn name(self) -> &'static str {
        match self {
            AngleMode::Interpolant => "interpolant",
            AngleMode::TrainGradient => "train_gradient",
            AngleMode::AdvGradient => "adv_gradient",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SurveyPair {
    pub x0: Array1<f64>,
    pub x1: Array1<f64>,
    pub label0: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleRecord {
    pub pair_id: usize,
    pub angle: Option<f64>,
    pub n_samples_used: usize,
    pub singular_gap: f64,
    pub residual: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleSurvey {
    pub mode: AngleMode,
    pub records: Vec<AngleRecord>,
}

impl AngleSurvey {
    /// Angles of the pairs that succeeded.
    pub fn angles(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.angle).collect()
    }
}

/// Measures, for every pair, the angle of the chosen vector with the
/// boundary normal estimated at the first crossing from `x0`. Pair `i`
/// seeds its normal estimate with `derive_seed(cfg.seed, i)`; failures are
/// recorded and the survey continues.
pub fn angle_survey<C: Classifier + ?Sized>(
    net: &C,
    pairs: &[SurveyPair],
    mode: AngleMode,
    cfg: &NormalConfig,
) -> AngleSurvey {
    angle_survey_modes(net, pairs, &[mode], cfg)
        .pop()
        .expect("one survey per mode")
}

/// [`angle_survey`] for several modes at once. Each pair's normal is
/// estimated once and shared by all modes, so the surveys agree on it.
pub fn angle_survey_modes<C: Classifier + ?Sized>(
    net: &C,
    pairs: &[SurveyPair],
    modes: &[AngleMode],
    cfg: &NormalConfig,
) -> Vec<AngleSurvey> {
    let mut surveys: Vec<AngleSurvey> = modes
        .iter()
        .map(|&mode| AngleSurvey {
            mode,
            records: Vec::with_capacity(pairs.len()),
        })
        .collect();
    for (pair_id, pair) in pairs.iter().enumerate() {
        let mut c = cfg.clone();
        c.seed = rng::derive_seed(cfg.seed, pair_id as u64);
        let estimate = bisect_boundary(net, pair.x0.view(), pair.x1.view(), 200)
            .and_then(|bp| Ok((estimate_normal(net, &bp, &c)?, bp)));
        for survey in &mut surveys {
            let outcome = estimate.as_ref().map_err(|e| e.to_string()).and_then(|(est, bp)| {
                let v = survey_vector(net, pair, bp, survey.mode);
                angle_between(v.view(), est.normal.view())
                    .map(|a| (a, est))
                    .map_err(|e| e.to_string())
            });
            survey.records.push(match outcome {
                Ok((angle, est)) => AngleRecord {
                    pair_id,
                    angle: Some(angle),
                    n_samples_used: est.n_samples_used,
                    singular_gap: est.singular_gap,
                    residual: est.residual,
                    error: None,
                },
                Err(error) => AngleRecord {
                    pair_id,
                    angle: None,
                    n_samples_used: 0,
                    singular_gap: f64::NAN,
                    residual: f64::NAN,
                    error: Some(error),
                },
            });
        }
    }
    surveys
}

fn survey_vector<C: Classifier + ?Sized>(
    net: &C,
    pair: &SurveyPair,
    bp: &BoundaryPoint,
    mode: AngleMode,
) -> Array1<f64> {
    match mode {
        AngleMode::Interpolant => &pair.x1 - &pair.x0,
        AngleMode::TrainGradient => net.loss_gradient(pair.x0.view(), pair.label0),
        AngleMode::AdvGradient => net.loss_gradient(bp.x_b.view(), bp.class_hi),
    }
}
