use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "plab", version, about = "Stability, persistence and decision-boundary experiments")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", content = "args", rename_all = "kebab-case")]
pub enum Command {
    /// Train an MNIST network from the model zoo or custom layer sizes.
    Train(TrainArgs),
    /// Run an adversarial attack over test images.
    Attack(AttackArgs),
    /// Class frequencies of Gaussian samples over a grid of σ.
    Sweep(SweepArgs),
    /// γ-persistence of natural and adversarial test images.
    Persist(PersistArgs),
    /// Persistence along natural-to-adversarial segments.
    PersistPath(PersistPathArgs),
    /// Angles between vectors and estimated decision-boundary normals.
    Angles(AnglesArgs),
    /// Fit per-class PCA and write projected MNIST.
    Pca(PcaArgs),
    /// Train a projected-MNIST model (baseline, manifold, robust, both).
    MagTrain(MagTrainArgs),
    /// Robustness curves and gradient-alignment histograms.
    RobustEval(RobustEvalArgs),
    /// Norm concentration of Gaussian and uniform-ball samples.
    Concentration(ConcentrationArgs),
    /// Accuracy, distortion and persistence table over several models.
    Table1(Table1Args),
    /// Repeat a run from the config.json it wrote.
    #[serde(skip)]
    Rerun(RerunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Attack(_) => "attack",
            Command::Sweep(_) => "sweep",
            Command::Persist(_) => "persist",
            Command::PersistPath(_) => "persist-path",
            Command::Angles(_) => "angles",
            Command::Pca(_) => "pca",
            Command::MagTrain(_) => "mag-train",
            Command::RobustEval(_) => "robust-eval",
            Command::Concentration(_) => "concentration",
            Command::Table1(_) => "table1",
            Command::Rerun(_) => "rerun",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Common {
    /// Output directory for tables, plots and the manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// MNIST directory holding the four IDX files
    /// (default: $PLAB_DATA_DIR/mnist, else data/mnist).
    #[arg(long)]
    pub mnist_dir: Option<PathBuf>,
    /// Directory for zoo models trained on demand.
    #[arg(long, default_value = ".plab-cache")]
    pub cache: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ModelArg {
    /// Checkpoint file, or `zoo:<tag>` to train (or reuse) a zoo model.
    #[arg(long)]
    pub model: String,
    /// Seed for zoo models trained on demand.
    #[arg(long, default_value_t = 1)]
    pub model_seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Zoo tag (fc100-20, fc10-4, fc10-2, fc10-0, fc100-100-10, fc200-200-10).
    #[arg(long, conflicts_with = "sizes")]
    pub tag: Option<String>,
    /// Comma-separated layer widths, input first.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Per-layer regularization strengths (one value applies to all).
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Momentum coefficient; 0 gives plain SGD.
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Training container (default: MNIST training split).
    #[arg(long)]
    pub train_data: Option<PathBuf>,
    /// Evaluation container (default: MNIST test split).
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fgsm,
    Rfgsm,
    Bim,
    Igsm,
    Mifgsm,
    Pgd,
    Penalty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Targets {
    /// Untargeted.
    None,
    /// Every other class.
    All,
    /// One random other class per image.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormArg {
    L2,
    Linf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AttackOpts {
    #[arg(long, value_enum, default_value = "igsm")]
    pub method: Method,
    /// Budget; 0 with a targeted iterative method means no budget.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    #[arg(long, value_enum, default_value = "linf")]
    pub norm: NormArg,
    #[arg(long, default_value_t = 1.0)]
    pub momentum_decay: f64,
    /// Penalty weights for the penalty attack (default 10^-3 .. 10^2).
    #[arg(long, value_delimiter = ',')]
    pub c_grid: Option<Vec<f64>>,
    /// Disable the [0, 1] pixel box.
    #[arg(long)]
    pub no_clip: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AttackArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub attack: AttackOpts,
    #[arg(long, value_enum, default_value = "all")]
    pub targets: Targets,
    /// Correctly classified test images to attack.
    #[arg(long, default_value_t = 100)]
    pub n_images: usize,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArg,
    /// Test-set index of the image.
    #[arg(long)]
    pub image_id: usize,
    /// Sweep an IGSM adversarial example aimed at this class instead.
    #[arg(long)]
    pub target: Option<usize>,
    #[arg(long, default_value_t = 1.6)]
    pub sigma_max: f64,
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PersistOpts {
    #[arg(long, default_value_t = 0.7)]
    pub gamma: f64,
    /// Gaussian samples per stability estimate.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.01)]
    pub precision: f64,
    #[arg(long, default_value_t = 30)]
    pub max_steps: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PersistArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub persist: PersistOpts,
    #[command(flatten)]
    pub attack: AttackOpts,
    #[arg(long, value_enum, default_value = "all")]
    pub targets: Targets,
    /// Natural images; adversarial examples are generated from them.
    #[arg(long, default_value_t = 200)]
    pub n_images: usize,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PersistPathArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub persist: PersistOpts,
    #[arg(long, default_value_t = 50)]
    pub n_paths: usize,
    /// Grid points per segment, both ends included.
    #[arg(long, default_value_t = 21)]
    pub points: usize,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    /// Pairs of test images with different labels.
    Natural,
    /// Test images and their IGSM adversarial examples.
    Adversarial,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AnglesArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value = "adversarial")]
    pub pairs: PairKind,
    #[arg(long, default_value_t = 20)]
    pub n_pairs: usize,
    /// Samples around each boundary point.
    #[arg(long, default_value_t = 5000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub sigma: f64,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PcaArgs {
    #[command(flatten)]
    pub common: Common,
    /// Components per class.
    #[arg(long, default_value_t = 28)]
    pub k: usize,
    /// Subtract class means before the decomposition.
    #[arg(long)]
    pub centered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Baseline,
    Manifold,
    Robust,
    ManifoldRobust,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Manifold => "manifold",
            ModelKind::Robust => "robust",
            ModelKind::ManifoldRobust => "manifold-robust",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MagTrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory written by `plab pca`.
    #[arg(long)]
    pub pmnist: PathBuf,
    #[arg(long, value_enum)]
    pub kind: ModelKind,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1568)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,
    /// ℓ∞ radius of the training attack.
    #[arg(long, default_value_t = 0.1)]
    pub robust_epsilon: f64,
    #[arg(long, default_value_t = 7)]
    pub robust_iterations: usize,
    /// Use central differences (with this step) instead of exact
    /// second-order gradients for the ratio term.
    #[arg(long)]
    pub fd_step: Option<f64>,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RobustEvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory written by `plab pca`.
    #[arg(long)]
    pub pmnist: PathBuf,
    /// `tag=checkpoint`, repeatable.
    #[arg(long = "model", required = true)]
    pub models: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.025,0.05,0.075,0.1,0.15,0.2,0.3")]
    pub fgsm_eps: Vec<f64>,
    /// ℓ2 distances reported for the penalty (PGD) curve.
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,1.5,2,3,4,5")]
    pub pgd_eps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.03,0.1,0.3,1,3")]
    pub pgd_c_grid: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    pub pgd_iterations: usize,
    #[arg(long, default_value_t = 0.02)]
    pub pgd_step: f64,
    /// Evaluate on the first N test images only.
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ConcentrationArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 784)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Ball radius (default σ√n).
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub count: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,1.5,2,2.5,3,4,5,6,8")]
    pub eps_grid: Vec<f64>,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Table1Args {
    #[command(flatten)]
    pub common: Common,
    /// `name=checkpoint` or `name=zoo:<tag>`, repeatable.
    #[arg(long = "model")]
    pub models: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub model_seed: u64,
    #[command(flatten)]
    pub persist: PersistOpts,
    /// Natural images per model; each gets one random-target attack.
    #[arg(long, default_value_t = 300)]
    pub n_images: usize,
    #[arg(long, default_value_t = 300)]
    pub attack_iterations: usize,
    #[arg(long, default_value_t = 0.005)]
    pub attack_step: f64,
    #[arg(long, value_delimiter = ',')]
    pub c_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct RerunArgs {
    /// A config.json written by an earlier run.
    pub config: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
