//! Dataset ingestion, synthetic generators and on-disk formats.

mod container;
mod dataset;
pub mod idx;
pub mod mnist;
pub mod synthetic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use container::{
    load_bundle, load_container, read_container, save_container, write_container, BundleManifest,
    BundleWriter, CONTAINER_VERSION, BUNDLE_VERSION,
};
pub use dataset::LabeledDataset;
pub use mnist::{default_mnist_dir, load_mnist, load_mnist_idx, MnistSplit};
pub use synthetic::{
    generate_synthetic, normal_cdf, normal_quantile, persistence_at_distance,
    random_orthonormal_basis, LinearOracle, Oracle, SyntheticKind, SyntheticSpec,
};

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// Parsed from files, keyed by file name with hex SHA-256 digests.
    Files { sha256: BTreeMap<String, String> },
    Generator { spec: SyntheticSpec },
    /// Computed from another dataset.
    Derived {
        parent: String,
        operation: String,
        params: serde_json::Value,
    },
}

/// A named dataset with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetContainer {
    pub name: String,
    pub data: LabeledDataset,
    pub provenance: Provenance,
}
