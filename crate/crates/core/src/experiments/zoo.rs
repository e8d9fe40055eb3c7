use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::{AttackConfig, AttackMethod, Norm};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::manifold::{
    adversarial_train, dataset_fingerprint, mag_train, AdversarialObjective, MagConfig,
    MagObjective, PcaProjector,
};
use crate::nn::{
    accuracy, fit, load_checkpoint, save_checkpoint, train, MlpNetwork, Optimizer, TrainConfig,
};

/// How a recipe's network is optimized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainingKind {
    Plain,
    Mag { mag: MagConfig },
    Adversarial { attack: AttackConfig },
    MagAdversarial { mag: MagConfig, attack: AttackConfig },
}

impl TrainingKind {
    pub fn needs_projector(&self) -> bool {
        matches!(self, TrainingKind::Mag { .. } | TrainingKind::MagAdversarial { .. })
    }
}

/// Everything needed to reproduce a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecipe {
    pub tag: String,
    pub sizes: Vec<usize>,
    pub reg_lambda: Vec<f64>,
    pub init_seed: u64,
    pub train: TrainConfig,
    pub kind: TrainingKind,
}

const MNIST_EPOCHS: usize = 21;

fn mnist_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: MNIST_EPOCHS,
        batch_size: 64,
        learning_rate: 0.01,
        seed,
        optimizer: Optimizer::Momentum { mu: 0.9 },
    }
}

/// Tags accepted by [`mnist_recipe`].
pub const MNIST_TAGS: [&str; 6] = [
    "fc100-20",
    "fc10-4",
    "fc10-2",
    "fc10-0",
    "fc100-100-10",
    "fc200-200-10",
];

/// The MNIST networks: the 784-100-20-10 sweep model and the fully
/// connected rows of the persistence table. `fc10-k` is a single linear
/// softmax layer with `λ = 10⁻ᵏ`.
pub fn mnist_recipe(tag: &str, seed: u64) -> Result<ModelRecipe> {
    let (sizes, reg_lambda): (Vec<usize>, Vec<f64>) = match tag {
        "fc100-20" => (vec![784, 100, 20, 10], vec![1e-7; 3]),
        "fc10-4" => (vec![784, 10], vec![1e-4]),
        "fc10-2" => (vec![784, 10], vec![1e-2]),
        "fc10-0" => (vec![784, 10], vec![1.0]),
        "fc100-100-10" => (vec![784, 100, 100, 10], vec![1e-5, 1e-5, 1e-6]),
        "fc200-200-10" => (vec![784, 200, 200, 10], vec![1e-5, 1e-5, 1e-6]),
        _ => {
            return Err(Error::config(format!(
                "unknown model tag {tag:?} (known: {})",
                MNIST_TAGS.join(", ")
            )))
        }
    };
    Ok(ModelRecipe {
        tag: tag.into(),
        sizes,
        reg_lambda,
        init_seed: seed,
        train: mnist_train_config(seed),
        kind: TrainingKind::Plain,
    })
}

/// Tags accepted by [`pmnist_recipe`].
pub const PMNIST_TAGS: [&str; 4] = ["baseline", "manifold", "robust", "manifold-robust"];

/// Settings shared by the four PMNIST models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmnistSettings {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub alpha: f64,
    pub robust_epsilon: f64,
    pub robust_step: f64,
    pub robust_iterations: usize,
}

impl Default for PmnistSettings {
    fn default() -> Self {
        Self {
            hidden: 1568,
            epochs: 1,
            batch_size: 128,
            learning_rate: 0.01,
            alpha: 1.0,
            robust_epsilon: 0.1,
            robust_step: 0.025,
            robust_iterations: 7,
        }
    }
}

/// The ℓ∞ PGD attack used for adversarial training.
pub fn robust_attack(s: &PmnistSettings) -> AttackConfig {
    AttackConfig {
        method: AttackMethod::Pgd,
        epsilon: s.robust_epsilon,
        step_size: s.robust_step,
        iterations: s.robust_iterations,
        norm: Norm::Linf,
        clip: None,
        early_stop: false,
        ..AttackConfig::default()
    }
}

/// Two-hidden-layer PMNIST models. All four share the initial weights and
/// batch order, and differ only in the objective.
pub fn pmnist_recipe(tag: &str, settings: &PmnistSettings, seed: u64) -> Result<ModelRecipe> {
    let mag = MagConfig {
        alpha: settings.alpha,
        ..MagConfig::default()
    };
    let kind = match tag {
        "baseline" => TrainingKind::Plain,
        "manifold" => TrainingKind::Mag { mag },
        "robust" => TrainingKind::Adversarial {
            attack: robust_attack(settings),
        },
        "manifold-robust" => TrainingKind::MagAdversarial {
            mag,
            attack: robust_attack(settings),
        },
        _ => {
            return Err(Error::config(format!(
                "unknown PMNIST model {tag:?} (known: {})",
                PMNIST_TAGS.join(", ")
            )))
        }
    };
    let h = settings.hidden;
    Ok(ModelRecipe {
        tag: tag.into(),
        sizes: vec![784, h, h, 10],
        reg_lambda: vec![0.0; 3],
        init_seed: seed,
        train: TrainConfig {
            epochs: settings.epochs,
            batch_size: settings.batch_size,
            learning_rate: settings.learning_rate,
            seed,
            optimizer: Optimizer::Momentum { mu: 0.9 },
        },
        kind,
    })
}

/// Trains a fresh network from a recipe.
pub fn train_recipe(
    recipe: &ModelRecipe,
    data: &LabeledDataset,
    projector: Option<&PcaProjector>,
) -> Result<MlpNetwork> {
    let mut net = MlpNetwork::init(&recipe.sizes, recipe.reg_lambda.clone(), recipe.init_seed)?;
    let need = || projector.ok_or_else(|| Error::config("this recipe needs a PCA projector"));
    let report = match &recipe.kind {
        TrainingKind::Plain => train(&mut net, data, &recipe.train)?,
        TrainingKind::Mag { mag } => mag_train(&mut net, data, need()?, mag, &recipe.train)?,
        TrainingKind::Adversarial { attack } => {
            adversarial_train(&mut net, data, attack, &recipe.train)?
        }
        TrainingKind::MagAdversarial { mag, attack } => {
            let inner = MagObjective::new(need()?, *mag);
            let mut obj = AdversarialObjective::new(inner, attack.clone())?;
            fit(&mut net, data, &recipe.train, &mut obj)?
        }
    };
    if report.skipped_batches > 0 {
        log::warn!("{}: {} batches skipped", recipe.tag, report.skipped_batches);
    }
    Ok(net)
}

/// Trained models on disk, keyed by a hash of the recipe, the training
/// data and (when used) the projector.
#[derive(Debug, Clone)]
pub struct ModelCache {
    dir: PathBuf,
}

impl ModelCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(
        recipe: &ModelRecipe,
        data_fingerprint: &str,
        projector: Option<&PcaProjector>,
    ) -> Result<String> {
        let mut h = Sha256::new();
        h.update(env!("CARGO_PKG_VERSION"));
        h.update(serde_json::to_vec(recipe)?);
        h.update(data_fingerprint);
        if let Some(p) = projector.filter(|_| recipe.kind.needs_projector()) {
            h.update(serde_json::to_vec(p)?);
        }
        Ok(hex::encode(h.finalize()))
    }

    /// Loads the cached model for `recipe` or trains and stores it.
    pub fn get_or_train(
        &self,
        recipe: &ModelRecipe,
        data: &LabeledDataset,
        projector: Option<&PcaProjector>,
    ) -> Result<MlpNetwork> {
        let key = Self::key(recipe, &dataset_fingerprint(data), projector)?;
        let path = self.dir.join(format!("{}-{}.json", recipe.tag, &key[..16]));
        if path.exists() {
            log::info!("loading cached model {}", path.display());
            return load_checkpoint(&path);
        }
        log::info!("training {} ({} epochs)", recipe.tag, recipe.train.epochs);
        let mut net = train_recipe(recipe, data, projector)?;
        net.meta.accuracy = Some(accuracy(&net, data));
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let tmp = path.with_extension("tmp");
        save_checkpoint(&net, &tmp)?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(net)
    }
}
