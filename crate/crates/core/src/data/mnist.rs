//! MNIST loading from the four standard IDX files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::idx::{parse_idx, IMAGES_MAGIC, LABELS_MAGIC};
use super::{DatasetContainer, LabeledDataset, Provenance};
use crate::error::{Error, Result};

pub const MNIST_SIDE: usize = 28;
pub const MNIST_DIM: usize = MNIST_SIDE * MNIST_SIDE;
pub const MNIST_CLASSES: usize = 10;

/// Environment variable naming the directory holding the IDX files.
pub const DATA_DIR_ENV: &str = "PLAB_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

impl MnistSplit {
    pub fn file_names(self) -> (&'static str, &'static str) {
        match self {
            MnistSplit::Train => ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
            MnistSplit::Test => ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
        }
    }

    pub fn expected_len(self) -> usize {
        match self {
            MnistSplit::Train => 60_000,
            MnistSplit::Test => 10_000,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MnistSplit::Train => "mnist-train",
            MnistSplit::Test => "mnist-test",
        }
    }
}

/// `$PLAB_DATA_DIR/mnist` if set, else `data/mnist`.
pub fn default_mnist_dir() -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(d) => PathBuf::from(d).join("mnist"),
        None => PathBuf::from("data").join("mnist"),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parses an image/label IDX pair of 28×28 digits, scaling pixels by 1/255.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<DatasetContainer> {
    let img_bytes = read(images_path)?;
    let lbl_bytes = read(labels_path)?;
    let images = parse_idx(&img_bytes)?;
    let labels = parse_idx(&lbl_bytes)?;
    if images.magic() != IMAGES_MAGIC {
        return Err(Error::Format {
            what: "IDX image file",
            offset: 0,
            reason: format!("magic 0x{:08x}, expected 0x{IMAGES_MAGIC:08x}", images.magic()),
        });
    }
    if labels.magic() != LABELS_MAGIC {
        return Err(Error::Format {
            what: "IDX label file",
            offset: 0,
            reason: format!("magic 0x{:08x}, expected 0x{LABELS_MAGIC:08x}", labels.magic()),
        });
    }
    if images.dims[1] != MNIST_SIDE || images.dims[2] != MNIST_SIDE {
        return Err(Error::Format {
            what: "IDX image file",
            offset: 8,
            reason: format!("images are {}x{}, expected 28x28", images.dims[1], images.dims[2]),
        });
    }
    let n = images.dims[0];
    if labels.dims[0] != n {
        return Err(Error::Format {
            what: "IDX label file",
            offset: 4,
            reason: format!("{} labels for {n} images", labels.dims[0]),
        });
    }
    let inputs = Array2::from_shape_vec(
        (n, MNIST_DIM),
        images.data.iter().map(|&p| p as f64 / 255.0).collect(),
    )
    .expect("shape checked");
    let ys: Vec<usize> = labels.data.iter().map(|&l| l as usize).collect();
    if let Some(pos) = ys.iter().position(|&y| y >= MNIST_CLASSES) {
        return Err(Error::Format {
            what: "IDX label file",
            offset: 8 + pos as u64,
            reason: format!("label {} out of range", ys[pos]),
        });
    }
    let mut sha256 = BTreeMap::new();
    for (path, bytes) in [(images_path, &img_bytes), (labels_path, &lbl_bytes)] {
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        sha256.insert(name, hex::encode(Sha256::digest(bytes)));
    }
    Ok(DatasetContainer {
        name: "mnist".into(),
        data: LabeledDataset::new(inputs, ys, MNIST_CLASSES)?,
        provenance: Provenance::Files { sha256 },
    })
}

/// Loads a full MNIST split from `dir`, enforcing the standard size.
pub fn load_mnist(dir: &Path, split: MnistSplit) -> Result<DatasetContainer> {
    let (img, lbl) = split.file_names();
    let mut c = load_mnist_idx(&dir.join(img), &dir.join(lbl))?;
    if c.data.len() != split.expected_len() {
        return Err(Error::Format {
            what: "IDX image file",
            offset: 4,
            reason: format!(
                "{} examples, expected {} for {}",
                c.data.len(),
                split.expected_len(),
                split.name()
            ),
        });
    }
    c.name = split.name().into();
    Ok(c)
}
