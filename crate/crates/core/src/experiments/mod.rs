//! End-to-end experiment pipelines shared by the command-line tool and the
//! acceptance suite: model recipes with an on-disk cache, persistence
//! studies on natural and adversarial images, the persistence table, and
//! the projected-MNIST comparison.

mod pmnist;
mod studies;
mod zoo;

pub use pmnist::{build_pmnist, evaluate_model, ModelEvaluation, Pmnist, PMNIST_K};
pub use studies::{
    adversarial_angle_surveys, all_target_attacks, igsm_config, log_histogram_overlap, mean,
    median, natural_pairs, path_profiles, persistence_of_rows, persistence_study,
    random_target_attacks, sample_correct, table1_row, AdversarialRecord, ImageKind, PathProfile,
    PersistenceRecord, PersistenceStudy, Table1Row,
};
pub use zoo::{
    mnist_recipe, pmnist_recipe, robust_attack, train_recipe, ModelCache, ModelRecipe,
    PmnistSettings, TrainingKind, MNIST_TAGS, PMNIST_TAGS,
};
