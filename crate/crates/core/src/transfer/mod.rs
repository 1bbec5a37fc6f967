//! Layer transplanting between networks: copy the first `k` convolutions, or
//! the dense layers and heads, from a source checkpoint and freeze them.

mod pretext;

pub use pretext::{
    locator_accuracy, make_pretext_dataset, pretext_states, pretrain_locator, EpochStats, PretextDataset, PretextMeta, PretextSample, PretrainConfig,
    PretrainReport, PRETEXT_MAGIC,
};

use crate::nn::{load_checkpoint, Heads, NetworkParams, NnError, CONV_NAMES};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("source checkpoint has no layer {0}")]
    MissingLayer(String),
    #[error("layer {name}: source shape {source_shape:?}, target {target_shape:?}")]
    ShapeMismatch {
        name: String,
        source_shape: Vec<usize>,
        target_shape: Vec<usize>,
    },
    #[error("conv transfer depth {0} outside 1..=3")]
    Depth(u8),
    #[error("pretext dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Level(#[from] crate::engine::LevelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    /// Copy and freeze `conv1..=convK`.
    ConvK(u8),
    /// Copy and freeze the 512-unit layer and both heads; convolutions are retrained.
    FcOnly,
}

impl TransferMode {
    /// Names of the layers this mode transplants.
    pub fn layers(self) -> Result<Vec<&'static str>, TransferError> {
        match self {
            TransferMode::ConvK(k) if (1..=3).contains(&k) => Ok(CONV_NAMES[..k as usize].to_vec()),
            TransferMode::ConvK(k) => Err(TransferError::Depth(k)),
            TransferMode::FcOnly => Ok(vec!["fc", "policy", "value"]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferSpec {
    pub source_checkpoint: PathBuf,
    pub mode: TransferMode,
    pub reinit_seed: u64,
}

/// A fresh actor-critic network from `reinit_seed` with the mode's layers
/// replaced by bit copies of `source` and frozen. Nothing else depends on `source`.
pub fn apply_transfer(source: &NetworkParams<f32>, mode: TransferMode, reinit_seed: u64) -> Result<NetworkParams<f32>, TransferError> {
    let mut target = NetworkParams::<f32>::init(Heads::ActorCritic, reinit_seed);
    for name in mode.layers()? {
        let src = source.layer(name).ok_or_else(|| TransferError::MissingLayer(name.into()))?;
        let idx = target.layer_index(name).expect("actor-critic layer");
        let dst = &mut target.layers[idx];
        if src.weight_shape != dst.weight_shape || src.bias.len() != dst.bias.len() || src.weight.len() != dst.weight.len() {
            return Err(TransferError::ShapeMismatch {
                name: name.into(),
                source_shape: src.weight_shape.clone(),
                target_shape: dst.weight_shape.clone(),
            });
        }
        *dst = src.clone();
        target.freeze_mask[idx] = true;
    }
    Ok(target)
}

/// [`apply_transfer`] with the source read from disk.
pub fn apply_transfer_spec(spec: &TransferSpec) -> Result<NetworkParams<f32>, TransferError> {
    let ckpt = load_checkpoint(&spec.source_checkpoint)?;
    apply_transfer(&ckpt.params, spec.mode, spec.reinit_seed)
}
