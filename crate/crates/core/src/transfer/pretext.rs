//! The agent-location pretext task: classify which of the 100 cells holds the
//! player, from pixels.

use super::TransferError;
use crate::engine::{self, render, Action, GameState, Level, Observation, PaletteId, CELL_COUNT, OBS_LEN};
use crate::nn::{cross_entropy_loss, forward, Heads, NetworkParams, RmsProp, RmsPropConfig};
use crate::seeding::stream_rng;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const PRETEXT_MAGIC: &[u8; 7] = b"SOKOPT1";
const SAMPLE_TAG: u64 = 0x7072_6574;
const SHUFFLE_TAG: u64 = 0x7368_7566;

#[derive(Clone, Debug, PartialEq)]
pub struct PretextSample {
    pub observation: Observation,
    /// `10 * row + col` of the player.
    pub label: usize,
}

/// JSON sidecar of a packed dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretextMeta {
    pub seed: u64,
    pub count: usize,
    pub source_set: String,
    pub walk_len: usize,
    pub palette: PaletteId,
}

/// Observations kept as exact 8-bit intensities.
#[derive(Clone, Debug, PartialEq)]
pub struct PretextDataset {
    pub meta: PretextMeta,
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl PretextDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn sample(&self, i: usize) -> PretextSample {
        PretextSample {
            observation: Observation::from_bytes(&self.pixels[i * OBS_LEN..(i + 1) * OBS_LEN]),
            label: self.label(i),
        }
    }

    /// Flat observation batch and labels for the given sample indices.
    pub fn batch(&self, indices: &[usize]) -> (Vec<f32>, Vec<usize>) {
        let mut obs = Vec::with_capacity(indices.len() * OBS_LEN);
        for &i in indices {
            obs.extend(self.pixels[i * OBS_LEN..(i + 1) * OBS_LEN].iter().map(|&b| b as f32 / 255.0));
        }
        (obs, indices.iter().map(|&i| self.label(i)).collect())
    }

    /// First `n` samples and the rest, as two datasets.
    pub fn split_at(&self, n: usize) -> (PretextDataset, PretextDataset) {
        let part = |range: std::ops::Range<usize>| PretextDataset {
            meta: PretextMeta {
                count: range.len(),
                ..self.meta.clone()
            },
            pixels: self.pixels[range.start * OBS_LEN..range.end * OBS_LEN].to_vec(),
            labels: self.labels[range].to_vec(),
        };
        (part(0..n), part(n..self.len()))
    }

    /// `magic | u32 count | u32 obs_len | u8 pixels | u8 labels`, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(15 + self.pixels.len() + self.labels.len());
        out.extend_from_slice(PRETEXT_MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(OBS_LEN as u32).to_le_bytes());
        out.extend_from_slice(&self.pixels);
        out.extend_from_slice(&self.labels);
        out
    }

    pub fn from_bytes(bytes: &[u8], meta: PretextMeta) -> Result<Self, TransferError> {
        let bad = |m: &str| TransferError::Dataset(m.to_string());
        if bytes.len() < 15 || &bytes[..7] != PRETEXT_MAGIC {
            return Err(bad("bad magic"));
        }
        let count = u32::from_le_bytes(bytes[7..11].try_into().expect("4 bytes")) as usize;
        let obs_len = u32::from_le_bytes(bytes[11..15].try_into().expect("4 bytes")) as usize;
        if obs_len != OBS_LEN || bytes.len() != 15 + count * (OBS_LEN + 1) || count != meta.count {
            return Err(bad("length does not match header"));
        }
        let labels = bytes[15 + count * OBS_LEN..].to_vec();
        if labels.iter().any(|&l| l as usize >= CELL_COUNT) {
            return Err(bad("label out of range"));
        }
        Ok(PretextDataset {
            meta,
            pixels: bytes[15..15 + count * OBS_LEN].to_vec(),
            labels,
        })
    }

    /// Writes `<stem>.bin` and `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf), TransferError> {
        std::fs::create_dir_all(dir)?;
        let bin = dir.join(format!("{stem}.bin"));
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&bin, self.to_bytes())?;
        let meta = serde_json::to_string_pretty(&self.meta).map_err(|e| TransferError::Dataset(e.to_string()))?;
        std::fs::write(&json, meta + "\n")?;
        Ok((bin, json))
    }

    pub fn load(bin: &Path) -> Result<Self, TransferError> {
        let meta: PretextMeta =
            serde_json::from_str(&std::fs::read_to_string(bin.with_extension("json"))?).map_err(|e| TransferError::Dataset(e.to_string()))?;
        PretextDataset::from_bytes(&std::fs::read(bin)?, meta)
    }
}

/// States behind a pretext dataset. Sample `i` draws from stream `(seed, i)`: a
/// level uniformly, `walk_len` random actions from its start (stopping early at a
/// terminal state), then the player is moved to a uniform cell of the region it
/// can walk to. The last step spreads labels across the board instead of piling
/// them near start positions.
pub fn pretext_states(levels: &[Level], count: usize, seed: u64, walk_len: usize) -> Result<Vec<GameState>, TransferError> {
    if levels.is_empty() {
        return Err(TransferError::Dataset("no levels".into()));
    }
    let starts = levels.iter().map(engine::reset).collect::<Result<Vec<GameState>, _>>()?;
    Ok((0..count)
        .map(|i| {
            let mut rng = stream_rng(seed, &[SAMPLE_TAG, i as u64]);
            let mut state = starts[rng.random_range(0..starts.len())].clone();
            for _ in 0..walk_len {
                if state.is_terminal() {
                    break;
                }
                state = engine::step(&state, Action::ALL[rng.random_range(0..4)]).0;
            }
            let region = state.walkable_region();
            state.with_player(region[rng.random_range(0..region.len())])
        })
        .collect())
}

/// Renders [`pretext_states`] and labels each with the player's cell.
pub fn make_pretext_dataset(
    levels: &[Level],
    count: usize,
    seed: u64,
    walk_len: usize,
    palette: PaletteId,
    source_set: &str,
) -> Result<PretextDataset, TransferError> {
    let states = pretext_states(levels, count, seed, walk_len)?;
    let mut pixels = Vec::with_capacity(count * OBS_LEN);
    let mut labels = Vec::with_capacity(count);
    for state in &states {
        pixels.extend(render(state, palette).to_bytes());
        labels.push(state.player().index() as u8);
    }
    Ok(PretextDataset {
        meta: PretextMeta {
            seed,
            count,
            source_set: source_set.into(),
            walk_len,
            palette,
        },
        pixels,
        labels,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: RmsPropConfig,
    /// Stop after the first epoch whose held-out accuracy reaches this value.
    pub target_accuracy: Option<f64>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 20,
            batch_size: 32,
            seed: 0,
            optimizer: RmsPropConfig::default(),
            target_accuracy: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub heldout_accuracy: f64,
}

pub struct PretrainReport {
    pub params: NetworkParams<f32>,
    pub initial_heldout_accuracy: f64,
    pub history: Vec<EpochStats>,
}

/// Fraction of `data` whose argmax class equals the label.
pub fn locator_accuracy(params: &NetworkParams<f32>, data: &PretextDataset) -> Result<f64, TransferError> {
    if data.is_empty() {
        return Err(TransferError::Dataset("empty dataset".into()));
    }
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(100) {
        let (obs, labels) = data.batch(chunk);
        let out = forward(params, &obs)?;
        correct += labels.iter().enumerate().filter(|&(i, &l)| crate::nn::argmax(out.logits_row(i)) == l).count();
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Trains a 100-way locator head on the shared trunk with cross-entropy.
pub fn pretrain_locator(train: &PretextDataset, heldout: &PretextDataset, cfg: &PretrainConfig) -> Result<PretrainReport, TransferError> {
    if train.is_empty() || cfg.batch_size == 0 {
        return Err(TransferError::Dataset("empty training set or zero batch size".into()));
    }
    let mut params = NetworkParams::<f32>::init(Heads::Locator, cfg.seed);
    let initial_heldout_accuracy = locator_accuracy(&params, heldout)?;
    let mut opt = RmsProp::new(cfg.optimizer, &params);
    let mut history = Vec::new();
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream_rng(cfg.seed, &[SHUFFLE_TAG, epoch as u64]));
        let (mut loss_sum, mut acc_sum) = (0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let (obs, labels) = train.batch(chunk);
            let (loss, acc, grads) = cross_entropy_loss(&params, &obs, &labels)?;
            opt.step(&mut params, &grads)?;
            loss_sum += loss * chunk.len() as f64;
            acc_sum += acc * chunk.len() as f64;
        }
        let stats = EpochStats {
            epoch: epoch + 1,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: acc_sum / train.len() as f64,
            heldout_accuracy: locator_accuracy(&params, heldout)?,
        };
        history.push(stats);
        if cfg.target_accuracy.is_some_and(|t| stats.heldout_accuracy >= t) {
            break;
        }
    }
    Ok(PretrainReport {
        params,
        initial_heldout_accuracy,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Cell, Tile};
    use crate::levelgen::{generate, GenConstraints};

    fn levels() -> Vec<Level> {
        generate(8, 1, 12, &GenConstraints::default()).unwrap().levels
    }

    #[test]
    fn labels_match_states_and_are_never_walls() {
        let lv = levels();
        let states = pretext_states(&lv, 200, 3, 20).unwrap();
        let d = make_pretext_dataset(&lv, 200, 3, 20, PaletteId::Base, "t").unwrap();
        for (i, s) in states.iter().enumerate() {
            assert_eq!(d.label(i), 10 * s.player().row() + s.player().col());
            assert_ne!(s.board().tile(s.player()), Tile::Wall);
            assert!(!s.has_box(s.player()));
            assert_eq!(d.sample(i).observation, render(s, PaletteId::Base));
        }
    }

    #[test]
    fn row_col_label_mapping() {
        assert_eq!(Cell::new(3, 4).index(), 34);
    }

    #[test]
    fn deterministic_and_round_trips() {
        let lv = levels();
        let a = make_pretext_dataset(&lv, 30, 9, 20, PaletteId::Base, "t").unwrap();
        let b = make_pretext_dataset(&lv, 30, 9, 20, PaletteId::Base, "t").unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        let (bin, _) = a.save(dir.path(), "pre").unwrap();
        assert_eq!(PretextDataset::load(&bin).unwrap(), a);
        let mut bytes = a.to_bytes();
        bytes.pop();
        assert!(PretextDataset::from_bytes(&bytes, a.meta.clone()).is_err());
    }

    #[test]
    fn short_training_reduces_loss() {
        let lv = levels();
        let d = make_pretext_dataset(&lv, 128, 1, 20, PaletteId::Base, "t").unwrap();
        let (train, held) = d.split_at(96);
        let cfg = PretrainConfig {
            epochs: 3,
            ..Default::default()
        };
        let r = pretrain_locator(&train, &held, &cfg).unwrap();
        assert_eq!(r.history.len(), 3);
        assert!(r.history[2].train_loss < r.history[0].train_loss);
        assert_eq!(r.params.heads, Heads::Locator);
    }
}
