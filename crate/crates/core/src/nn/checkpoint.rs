//! JSON checkpoints. Floats round-trip exactly, so a reloaded network
//! reproduces its logits bit for bit.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Activation, DenseLayer, MlpNetwork, ModelMeta};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointLayer {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows × cols`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub input_dim: usize,
    pub num_classes: usize,
    pub layers: Vec<CheckpointLayer>,
    pub reg_lambda: Vec<f64>,
    #[serde(default)]
    pub meta: ModelMeta,
}

impl Checkpoint {
    pub fn from_network(net: &MlpNetwork) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            input_dim: net.input_dim(),
            num_classes: net.num_classes(),
            layers: net
                .layers()
                .iter()
                .map(|l| CheckpointLayer {
                    rows: l.out_dim(),
                    cols: l.in_dim(),
                    weights: l.weight.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                    activation: l.activation,
                })
                .collect(),
            reg_lambda: net.reg_lambda().to_vec(),
            meta: net.meta.clone(),
        }
    }

    pub fn into_network(self) -> Result<MlpNetwork> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: self.version,
                supported: CHECKPOINT_VERSION,
            });
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.into_iter().enumerate() {
            let weight = Array2::from_shape_vec((l.rows, l.cols), l.weights).map_err(|e| {
                Error::InvalidConfig(format!("checkpoint layer {i}: {e}"))
            })?;
            if l.bias.len() != l.rows {
                return Err(Error::InvalidConfig(format!(
                    "checkpoint layer {i}: bias has {} entries, expected {}",
                    l.bias.len(),
                    l.rows
                )));
            }
            layers.push(DenseLayer {
                weight,
                bias: Array1::from(l.bias),
                activation: l.activation,
            });
        }
        let mut net = MlpNetwork::new(layers, self.reg_lambda)?;
        if net.input_dim() != self.input_dim || net.num_classes() != self.num_classes {
            return Err(Error::InvalidConfig(
                "checkpoint header disagrees with layer shapes".into(),
            ));
        }
        net.meta = self.meta;
        Ok(net)
    }
}

pub fn save_checkpoint(net: &MlpNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_vec(&Checkpoint::from_network(net))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MlpNetwork> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_slice(&bytes)?;
    ckpt.into_network()
}
