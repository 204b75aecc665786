use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::net::TwoStreamNet;
use crate::error::{Error, Result};
use crate::nn::LayerSpec;
use crate::tensor::{read_tensor, write_tensor};

const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Everything in a checkpoint directory except the tensors themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub model: ModelConfig,
    pub layers: Vec<LayerSpec>,
    pub parameters: Vec<ParamEntry>,
    pub seed: u64,
    pub epoch: usize,
    pub val_accuracy: f64,
}

/// Writes `manifest.json` plus `layer{i}.weight.htsr` / `layer{i}.bias.htsr`
/// for every parameterized layer into `dir`.
pub fn save_checkpoint(net: &TwoStreamNet<f32>, dir: &Path, seed: u64, epoch: usize, val_accuracy: f64) -> Result<CheckpointManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut parameters = Vec::new();
    for (i, w, b) in net.named_params() {
        for (kind, t) in [("weight", w), ("bias", b)] {
            let name = format!("layer{i}.{kind}");
            write_tensor(t, dir.join(format!("{name}.htsr")))?;
            parameters.push(ParamEntry {
                name,
                shape: t.shape().to_vec(),
            });
        }
    }
    let manifest = CheckpointManifest {
        model: net.config().clone(),
        layers: net.layer_specs(),
        parameters,
        seed,
        epoch,
        val_accuracy,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("checkpoint manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Rebuilds the network described by `dir/manifest.json` and loads its weights.
pub fn load_checkpoint(dir: &Path) -> Result<(TwoStreamNet<f32>, CheckpointManifest)> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    let mut net = TwoStreamNet::<f32>::new(manifest.model.clone())?;
    if net.layer_specs() != manifest.layers {
        return Err(Error::Contract(format!(
            "{}: layer list does not match its model config",
            dir.display()
        )));
    }
    let names: Vec<String> = net
        .named_params()
        .iter()
        .flat_map(|(i, _, _)| [format!("layer{i}.weight"), format!("layer{i}.bias")])
        .collect();
    let listed: Vec<&str> = manifest.parameters.iter().map(|p| p.name.as_str()).collect();
    if names != listed {
        return Err(Error::Contract(format!(
            "{}: parameters {listed:?} do not match the architecture",
            dir.display()
        )));
    }
    for (slot, name) in net.parameters_mut().into_iter().zip(&names) {
        let t = read_tensor(dir.join(format!("{name}.htsr")))?;
        if t.shape() != slot.shape() {
            return Err(Error::Contract(format!(
                "{name}: stored shape {:?}, expected {:?}",
                t.shape(),
                slot.shape()
            )));
        }
        *slot = t;
    }
    Ok((net, manifest))
}
