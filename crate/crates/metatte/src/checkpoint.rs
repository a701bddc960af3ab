//! Checkpoint files: model and training configuration, per-task scalers,
//! and every parameter tensor, in the shared container format.

use std::collections::BTreeMap;
use std::path::Path;

use metatte_core::model::ModelConfig;
use metatte_core::optim::ParamSnapshot;
use metatte_core::scaler::Scaler;
use metatte_core::trainer::TrainConfig;
use metatte_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::container::{read_container, write_container, ContainerError};

/// One tensor's location inside the payload, in f64 elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDescriptor {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub kind: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub scalers: BTreeMap<String, Scaler>,
    pub tensors: Vec<TensorDescriptor>,
    pub best_iteration: Option<u64>,
    pub best_val_mae: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub params: BTreeMap<String, Tensor>,
}

/// Errors specific to checkpoint content (container errors pass through).
#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("{path} is not a checkpoint (kind {found:?})")]
    WrongKind { path: String, found: String },
    #[error("{path} has an inconsistent tensor table: {detail}")]
    BadTensorTable { path: String, detail: String },
}

pub fn save_checkpoint(
    path: &Path,
    model: &ModelConfig,
    train: &TrainConfig,
    scalers: &BTreeMap<String, Scaler>,
    params: &ParamSnapshot,
    best_iteration: Option<u64>,
    best_val_mae: Option<f64>,
) -> Result<(), CheckpointError> {
    let mut tensors = Vec::with_capacity(params.values.len());
    let mut payload = Vec::new();
    for (name, tensor) in &params.values {
        tensors.push(TensorDescriptor {
            name: name.clone(),
            shape: tensor.shape().to_vec(),
            offset: payload.len() as u64,
        });
        payload.extend_from_slice(tensor.data());
    }
    let manifest = CheckpointManifest {
        kind: "checkpoint".to_string(),
        model: model.clone(),
        train: train.clone(),
        scalers: scalers.clone(),
        tensors,
        best_iteration,
        best_val_mae,
    };
    write_container(path, &manifest, &payload)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let (manifest, payload): (CheckpointManifest, Vec<f64>) = read_container(path)?;
    let p = path.display().to_string();
    if manifest.kind != "checkpoint" {
        return Err(CheckpointError::WrongKind {
            path: p,
            found: manifest.kind,
        });
    }
    let mut params = BTreeMap::new();
    for desc in &manifest.tensors {
        let len: usize = desc.shape.iter().product();
        let start = desc.offset as usize;
        let end = start + len;
        if end > payload.len() {
            return Err(CheckpointError::BadTensorTable {
                path: p,
                detail: format!("tensor {} spans {start}..{end} beyond payload", desc.name),
            });
        }
        let tensor =
            Tensor::from_vec(&desc.shape, payload[start..end].to_vec()).map_err(|e| {
                CheckpointError::BadTensorTable {
                    path: p.clone(),
                    detail: e.to_string(),
                }
            })?;
        if params.insert(desc.name.clone(), tensor).is_some() {
            return Err(CheckpointError::BadTensorTable {
                path: p,
                detail: format!("tensor {} listed twice", desc.name),
            });
        }
    }
    Ok(Checkpoint { manifest, params })
}
