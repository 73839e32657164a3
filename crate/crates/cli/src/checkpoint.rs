//! Network weights as JSON.
//!
//! Floats are written in shortest round-trip form, so reloading a
//! checkpoint reproduces every weight bit for bit.

use std::path::Path;

use cotrain_core::model::{Architecture, NetworkParams, LAYER_NAMES};
use cotrain_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureRecord {
    pub input_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub classes: usize,
    pub proj_hidden: usize,
    pub proj_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    pub name: String,
    /// `[out, in]`.
    pub shape: [usize; 2],
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkRecord {
    pub architecture: ArchitectureRecord,
    pub layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedNetwork {
    /// `A` or `B`.
    pub network: String,
    /// `student` or `teacher`.
    pub role: String,
    pub params: NetworkRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub epoch: usize,
    pub networks: Vec<NamedNetwork>,
}

impl From<&NetworkParams> for NetworkRecord {
    fn from(p: &NetworkParams) -> Self {
        let a = p.arch;
        NetworkRecord {
            architecture: ArchitectureRecord {
                input_dim: a.input_dim,
                hidden1: a.hidden1,
                hidden2: a.hidden2,
                classes: a.classes,
                proj_hidden: a.proj_hidden,
                proj_dim: a.proj_dim,
            },
            layers: LAYER_NAMES
                .iter()
                .zip(p.layers())
                .map(|(name, l)| LayerRecord {
                    name: name.to_string(),
                    shape: [l.weight.rows(), l.weight.cols()],
                    weight: l.weight.as_slice().to_vec(),
                    bias: l.bias.clone(),
                })
                .collect(),
        }
    }
}

impl NetworkRecord {
    pub fn to_params(&self) -> Result<NetworkParams, String> {
        let a = &self.architecture;
        let arch = Architecture {
            input_dim: a.input_dim,
            hidden1: a.hidden1,
            hidden2: a.hidden2,
            classes: a.classes,
            proj_hidden: a.proj_hidden,
            proj_dim: a.proj_dim,
        };
        arch.validate().map_err(|e| e.to_string())?;
        let mut params = NetworkParams::zeros(arch);
        if self.layers.len() != LAYER_NAMES.len() {
            return Err(format!("expected {} layers, found {}", LAYER_NAMES.len(), self.layers.len()));
        }
        for ((record, name), layer) in self.layers.iter().zip(LAYER_NAMES).zip(params.layers_mut()) {
            if record.name != name {
                return Err(format!("expected layer {name}, found {}", record.name));
            }
            let [rows, cols] = record.shape;
            if [rows, cols] != [layer.weight.rows(), layer.weight.cols()] || record.bias.len() != rows {
                return Err(format!("layer {name} does not match the architecture"));
            }
            layer.weight = Matrix::from_vec(rows, cols, record.weight.clone()).map_err(|e| e.to_string())?;
            layer.bias = record.bias.clone();
        }
        Ok(params)
    }
}

impl Checkpoint {
    pub fn find(&self, network: &str, role: &str) -> Option<&NetworkRecord> {
        self.networks.iter().find(|n| n.network == network && n.role == role).map(|n| &n.params)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string(self).map_err(|e| CliError::format(path, e))?;
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = NetworkParams::init(Architecture::new(3, 4), 9).unwrap();
        let text = serde_json::to_string(&NetworkRecord::from(&p)).unwrap();
        let back: NetworkRecord = serde_json::from_str(&text).unwrap();
        let q = back.to_params().unwrap();
        assert!(p.values().zip(q.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(p, q);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = NetworkParams::init(Architecture::new(3, 4), 9).unwrap();
        let mut r = NetworkRecord::from(&p);
        r.layers[1].bias.pop();
        assert!(r.to_params().is_err());
        let mut r = NetworkRecord::from(&p);
        r.layers.swap(0, 1);
        assert!(r.to_params().is_err());
    }
}
