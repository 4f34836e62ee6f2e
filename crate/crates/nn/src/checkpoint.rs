use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Activation, DenseNet, NnError};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

/// Layer shapes plus the flat parameter array of one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetCheckpoint {
    pub version: u32,
    pub layers: Vec<LayerShape>,
    pub params: Vec<f64>,
}

impl DenseNet {
    pub fn to_checkpoint(&self) -> NetCheckpoint {
        let layers = self
            .widths()
            .windows(2)
            .zip(self.activations())
            .map(|(w, &activation)| LayerShape {
                inputs: w[0],
                outputs: w[1],
                activation,
            })
            .collect();
        NetCheckpoint {
            version: CHECKPOINT_VERSION,
            layers,
            params: self.params().to_vec(),
        }
    }

    pub fn from_checkpoint(ckpt: &NetCheckpoint) -> Result<Self, NnError> {
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported version {}",
                ckpt.version
            )));
        }
        if ckpt.layers.is_empty() {
            return Err(NnError::Checkpoint("no layers".into()));
        }
        let mut widths = vec![ckpt.layers[0].inputs];
        for pair in ckpt.layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(NnError::Checkpoint(
                    "incompatible consecutive layers".into(),
                ));
            }
        }
        widths.extend(ckpt.layers.iter().map(|l| l.outputs));
        let acts = ckpt.layers.iter().map(|l| l.activation).collect();
        DenseNet::from_parts(widths, acts, ckpt.params.clone())
    }
}

/// Named networks plus auxiliary vectors (e.g. a learned baseline), saved as
/// one JSON document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointBundle {
    pub version: u32,
    pub nets: BTreeMap<String, NetCheckpoint>,
    #[serde(default)]
    pub vectors: BTreeMap<String, Vec<f64>>,
}

impl CheckpointBundle {
    pub fn new() -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            ..Self::default()
        }
    }

    pub fn insert_net(&mut self, name: impl Into<String>, net: &DenseNet) {
        self.nets.insert(name.into(), net.to_checkpoint());
    }

    pub fn net(&self, name: &str) -> Result<DenseNet, NnError> {
        let ckpt = self
            .nets
            .get(name)
            .ok_or_else(|| NnError::Checkpoint(format!("missing network {name:?}")))?;
        DenseNet::from_checkpoint(ckpt)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        let bundle: Self =
            serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        if bundle.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported version {}",
                bundle.version
            )));
        }
        Ok(bundle)
    }
}
