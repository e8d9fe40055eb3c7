use serde::{Deserialize, Serialize};

use crate::data::{DatasetContainer, LabeledDataset, Provenance};
use crate::error::Result;
use crate::manifold::{
    alignment_histogram, alignment_scores, fit_pca, project_dataset, robustness_curve,
    CurveAttack, Histogram, PcaProjector, RobustnessPoint,
};
use crate::nn::{accuracy, MlpNetwork};

/// Default number of principal directions per class.
pub const PMNIST_K: usize = 28;

/// Projected MNIST and the projector that produced it.
#[derive(Debug, Clone)]
pub struct Pmnist {
    pub projector: PcaProjector,
    pub train: DatasetContainer,
    pub test: DatasetContainer,
}

/// Fits per-class PCA on the training split and projects both splits.
pub fn build_pmnist(train: &DatasetContainer, test: &DatasetContainer, k: usize) -> Result<Pmnist> {
    let projector = fit_pca(&train.data, k, false)?;
    let derive = |c: &DatasetContainer, split: &str| -> Result<DatasetContainer> {
        Ok(DatasetContainer {
            name: format!("pmnist-{split}"),
            data: project_dataset(&c.data, &projector)?,
            provenance: Provenance::Derived {
                parent: c.name.clone(),
                operation: "pca-projection".into(),
                params: serde_json::json!({
                    "k_per_class": k,
                    "components": projector.k,
                    "fitted_on": projector.fitted_on,
                }),
            },
        })
    };
    Ok(Pmnist {
        train: derive(train, "train")?,
        test: derive(test, "test")?,
        projector,
    })
}

/// Evaluation of one trained PMNIST model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub model_tag: String,
    pub test_accuracy: f64,
    pub mean_alignment: f64,
    pub alignment: Histogram,
    pub curves: Vec<(String, Vec<RobustnessPoint>)>,
}

impl ModelEvaluation {
    /// Accuracy of `attack` at the grid point closest to `epsilon`.
    pub fn accuracy_at(&self, attack: &str, epsilon: f64) -> Option<f64> {
        let (_, curve) = self.curves.iter().find(|(a, _)| a == attack)?;
        curve
            .iter()
            .min_by(|a, b| (a.epsilon - epsilon).abs().total_cmp(&(b.epsilon - epsilon).abs()))
            .map(|p| p.accuracy)
    }
}

pub fn evaluate_model(
    tag: &str,
    net: &MlpNetwork,
    test: &LabeledDataset,
    projector: &PcaProjector,
    attacks: &[CurveAttack],
    bins: usize,
) -> Result<ModelEvaluation> {
    let scores = alignment_scores(net, test, projector)?;
    let mean_alignment = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
    let mut curves = Vec::new();
    for a in attacks {
        curves.push((a.name().to_string(), robustness_curve(net, test, a)?));
    }
    Ok(ModelEvaluation {
        model_tag: tag.into(),
        test_accuracy: accuracy(net, test),
        mean_alignment,
        alignment: alignment_histogram(&scores, bins)?,
        curves,
    })
}
