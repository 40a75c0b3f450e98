//! Single-container model checkpoints.
//!
//! A checkpoint holds the format version, a stage tag, the build seed,
//! the config echo, optional metadata (e.g. the loss weights a privatizer
//! was trained with), and every named parameter and buffer tensor with
//! its shape. JSON numbers round-trip f64 bit-exactly, so save -> load
//! reproduces identical forward outputs.

use crate::attacker::{AttackerConfig, AttackerModel};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::nn::{NamedParam, NamedParamMut};
use crate::privatizer::{AutoencoderConfig, PrivatizerModel};
use crate::verifier::{VerifierConfig, VerifierModel};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// "verifier" | "privatizer" | "attacker:{gender|activity}:{raw|transformed}"
    pub stage: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub metadata: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

fn tensors_from(params: Vec<NamedParam<'_>>) -> Vec<NamedTensor> {
    params
        .into_iter()
        .map(|(name, _, view)| NamedTensor {
            name,
            shape: view.shape().to_vec(),
            data: view.iter().cloned().collect(),
        })
        .collect()
}

fn fill_params(tensors: &[NamedTensor], params: Vec<NamedParamMut<'_>>) -> Result<()> {
    let mut by_name: HashMap<&str, &NamedTensor> =
        tensors.iter().map(|t| (t.name.as_str(), t)).collect();
    let mut expected = 0;
    for (name, _, mut view) in params {
        expected += 1;
        let tensor = by_name.remove(name.as_str()).ok_or_else(|| {
            Error::Checkpoint(format!("missing tensor '{name}'"))
        })?;
        if tensor.shape != view.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor '{name}' has shape {:?}, expected {:?}",
                tensor.shape,
                view.shape()
            )));
        }
        for (dst, src) in view.iter_mut().zip(&tensor.data) {
            *dst = *src;
        }
    }
    if !by_name.is_empty() {
        let extra: Vec<_> = by_name.keys().collect();
        return Err(Error::Checkpoint(format!(
            "unknown tensors {extra:?} (model has {expected})"
        )));
    }
    Ok(())
}

impl Checkpoint {
    pub fn from_verifier(model: &VerifierModel, stage: &str) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            stage: stage.to_string(),
            seed: model.seed,
            config: serde_json::to_value(&model.config).expect("serializable config"),
            metadata: serde_json::Value::Null,
            tensors: tensors_from(model.named_params()),
        }
    }

    pub fn from_privatizer(model: &PrivatizerModel, weights: Option<LossWeights>) -> Self {
        let metadata = match weights {
            Some(w) => serde_json::to_value(w).expect("serializable weights"),
            None => serde_json::Value::Null,
        };
        Checkpoint {
            format_version: FORMAT_VERSION,
            stage: "privatizer".to_string(),
            seed: model.seed,
            config: serde_json::to_value(&model.config).expect("serializable config"),
            metadata,
            tensors: tensors_from(model.named_params()),
        }
    }

    pub fn from_attacker(model: &AttackerModel, domain: &str) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            stage: format!("attacker:{}:{}", model.config.attribute.name(), domain),
            seed: model.seed,
            config: serde_json::to_value(&model.config).expect("serializable config"),
            metadata: serde_json::Value::Null,
            tensors: tensors_from(model.named_params()),
        }
    }

    pub fn to_verifier(&self) -> Result<VerifierModel> {
        let config: VerifierConfig = serde_json::from_value(self.config.clone())
            .map_err(|e| Error::Checkpoint(format!("bad verifier config: {e}")))?;
        let mut model = VerifierModel::build(config, self.seed)?;
        fill_params(&self.tensors, model.named_params_mut())?;
        Ok(model)
    }

    pub fn to_privatizer(&self) -> Result<PrivatizerModel> {
        let config: AutoencoderConfig = serde_json::from_value(self.config.clone())
            .map_err(|e| Error::Checkpoint(format!("bad autoencoder config: {e}")))?;
        let mut model = PrivatizerModel::build(config, self.seed)?;
        fill_params(&self.tensors, model.named_params_mut())?;
        Ok(model)
    }

    pub fn to_attacker(&self) -> Result<AttackerModel> {
        let config: AttackerConfig = serde_json::from_value(self.config.clone())
            .map_err(|e| Error::Checkpoint(format!("bad attacker config: {e}")))?;
        let mut model = AttackerModel::build(config, self.seed)?;
        fill_params(&self.tensors, model.named_params_mut())?;
        Ok(model)
    }

    /// Loss weights recorded in a privatizer checkpoint, if any.
    pub fn loss_weights(&self) -> Option<LossWeights> {
        serde_json::from_value(self.metadata.clone()).ok()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
        let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let writer = std::io::BufWriter::new(file);
        serde_json::to_writer(writer, self)
            .map_err(|e| Error::Checkpoint(format!("serialize to {}: {e}", path.display())))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let reader = std::io::BufReader::new(file);
        let ckpt: Checkpoint = serde_json::from_reader(reader)
            .map_err(|e| Error::Checkpoint(format!("parse {}: {e}", path.display())))?;
        if ckpt.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {} unsupported (expected {FORMAT_VERSION})",
                ckpt.format_version
            )));
        }
        Ok(ckpt)
    }
}
