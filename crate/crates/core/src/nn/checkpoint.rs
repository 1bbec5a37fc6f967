//! Checkpoint container.
//!
//! ```text
//! b"SOKOTL1" | u32 LE header length | JSON header | f32 LE data
//! ```
//!
//! Data holds each layer's weights then biases, in header order.

use super::{Heads, LayerParams, NetworkParams, NnError};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"SOKOTL1";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub weight_shape: Vec<usize>,
    pub bias_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub heads: Heads,
    pub layers: Vec<LayerEntry>,
    pub freeze_mask: Vec<bool>,
    pub seed: u64,
    pub source_task: Option<String>,
    pub env_steps: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams<f32>,
    /// Task the weights were trained on, e.g. `1box` or `prediction`.
    pub source_task: Option<String>,
    pub env_steps: u64,
}

impl Checkpoint {
    pub fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            format_version: FORMAT_VERSION,
            heads: self.params.heads,
            layers: self
                .params
                .layers
                .iter()
                .map(|l| LayerEntry {
                    name: l.name.clone(),
                    weight_shape: l.weight_shape.clone(),
                    bias_len: l.bias.len(),
                })
                .collect(),
            freeze_mask: self.params.freeze_mask.clone(),
            seed: self.params.seed,
            source_task: self.source_task.clone(),
            env_steps: self.env_steps,
        }
    }
}

pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, mut w: W) -> Result<(), NnError> {
    let header = serde_json::to_vec(&ckpt.meta()).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(ckpt.params.param_count() * 4);
    for l in &ckpt.params.layers {
        for x in l.weight.iter().chain(&l.bias) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, NnError> {
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header)?;
    let meta: CheckpointMeta = serde_json::from_slice(&header).map_err(|e| NnError::Checkpoint(format!("header: {e}")))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported format version {}", meta.format_version)));
    }
    if meta.freeze_mask.len() != meta.layers.len() {
        return Err(NnError::Checkpoint("freeze mask length".into()));
    }
    let mut read_floats = |n: usize| -> Result<Vec<f32>, NnError> {
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    };
    let mut layers = Vec::with_capacity(meta.layers.len());
    for e in &meta.layers {
        let weight = read_floats(e.weight_shape.iter().product())?;
        let bias = read_floats(e.bias_len)?;
        layers.push(LayerParams {
            name: e.name.clone(),
            weight_shape: e.weight_shape.clone(),
            weight,
            bias,
        });
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(NnError::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    let params = NetworkParams {
        heads: meta.heads,
        layers,
        freeze_mask: meta.freeze_mask,
        seed: meta.seed,
    };
    params.check_shapes()?;
    Ok(Checkpoint {
        params,
        source_task: meta.source_task,
        env_steps: meta.env_steps,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), NnError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut buf = Vec::new();
    write_checkpoint(ckpt, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, NnError> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut params = NetworkParams::<f32>::init(Heads::ActorCritic, 12);
        params.freeze_mask[1] = true;
        Checkpoint {
            params,
            source_task: Some("1box".into()),
            env_steps: 4500,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let mut a = Vec::new();
        write_checkpoint(&c, &mut a).unwrap();
        assert_eq!(&a[..7], b"SOKOTL1");
        let back = read_checkpoint(a.as_slice()).unwrap();
        assert_eq!(back, c);
        let mut b = Vec::new();
        write_checkpoint(&back, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let mut bytes = Vec::new();
        write_checkpoint(&sample(), &mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(bad.as_slice()).is_err());
        assert!(read_checkpoint(&bytes[..bytes.len() - 4]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(read_checkpoint(long.as_slice()).is_err());
    }

    #[test]
    fn locator_checkpoint_round_trips() {
        let c = Checkpoint {
            params: NetworkParams::<f32>::init(Heads::Locator, 3),
            source_task: Some("prediction".into()),
            env_steps: 0,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loc.ckpt");
        save_checkpoint(&path, &c).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), c);
    }
}
