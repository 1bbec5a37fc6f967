//! Feature-map export and the agent-detector scan over first-layer channels.

use super::EvalError;
use crate::engine::{render, Cell, GameState, PaletteId, BOARD_SIZE, TILE_PX};
use crate::nn::{feature_maps, NetworkParams, CONV};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Post-ReLU activations of one channel for one observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMapDump {
    /// Conv layer, 1-based.
    pub layer: usize,
    pub channel: usize,
    pub observation_id: String,
    /// Grid side length.
    pub size: usize,
    /// Raw activations, row-major.
    pub grid: Vec<f32>,
    /// Activations rescaled per channel to `0..=255`; a constant map becomes all zero.
    #[serde(skip)]
    pub image: Vec<u8>,
}

pub fn dump_feature_maps(params: &NetworkParams<f32>, observation: &[f32], layer: usize, observation_id: &str) -> Result<Vec<FeatureMapDump>, EvalError> {
    let maps = feature_maps(params, observation, layer)?;
    let size = CONV[layer - 1].out_size();
    Ok(maps
        .into_iter()
        .enumerate()
        .map(|(channel, grid)| {
            let lo = grid.iter().copied().fold(f32::INFINITY, f32::min);
            let hi = grid.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let image = grid
                .iter()
                .map(|&v| if hi > lo { ((v - lo) / (hi - lo) * 255.0).round() as u8 } else { 0 })
                .collect();
            FeatureMapDump {
                layer,
                channel,
                observation_id: observation_id.to_string(),
                size,
                grid,
                image,
            }
        })
        .collect())
}

#[derive(Serialize)]
struct IndexEntry<'a> {
    file: String,
    #[serde(flatten)]
    dump: &'a FeatureMapDump,
}

/// Writes one binary PGM per dump plus `index.json`; returns every file written.
pub fn write_feature_dumps(dir: &Path, dumps: &[FeatureMapDump]) -> Result<Vec<PathBuf>, EvalError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut index = Vec::new();
    for d in dumps {
        let name = format!("{}_conv{}_ch{:02}.pgm", d.observation_id, d.layer, d.channel);
        let mut bytes = format!("P5\n{} {}\n255\n", d.size, d.size).into_bytes();
        bytes.extend_from_slice(&d.image);
        let path = dir.join(&name);
        std::fs::write(&path, bytes)?;
        written.push(path);
        index.push(IndexEntry { file: name, dump: d });
    }
    let path = dir.join("index.json");
    let json = serde_json::to_string_pretty(&index).map_err(|e| EvalError::Aggregate(e.to_string()))?;
    std::fs::write(&path, json + "\n")?;
    written.push(path);
    Ok(written)
}

/// Board row (or column) under the centre of the receptive field of conv1 output
/// position `j`: the field spans canvas pixels `4j..4j+8`, the board starts 2 pixels in.
pub fn conv1_position_to_cell(j: usize) -> usize {
    let g = CONV[0];
    let margin = (crate::engine::OBS_SIZE - BOARD_SIZE * TILE_PX) / 2;
    ((g.stride * j + g.kernel / 2).saturating_sub(margin) / TILE_PX).min(BOARD_SIZE - 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub states: usize,
    /// Per conv1 channel, how many states had the argmax over the channel's grid
    /// on the agent's cell.
    pub hits: Vec<usize>,
    pub best_channel: usize,
    pub best_rate: f64,
}

/// Scans every conv1 channel for one whose strongest response sits on the agent.
pub fn agent_detector_scan(params: &NetworkParams<f32>, states: &[GameState], palette: PaletteId) -> Result<DetectorReport, EvalError> {
    let channels = CONV[0].out_channels;
    let size = CONV[0].out_size();
    let mut hits = vec![0usize; channels];
    for s in states {
        let obs = render(s, palette);
        let maps = feature_maps(params, obs.pixels(), 1)?;
        for (c, grid) in maps.iter().enumerate() {
            let j = crate::nn::argmax(grid);
            let cell = Cell::new(conv1_position_to_cell(j / size), conv1_position_to_cell(j % size));
            if cell == s.player() {
                hits[c] += 1;
            }
        }
    }
    let best_channel = (0..channels).fold(0, |b, c| if hits[c] > hits[b] { c } else { b });
    Ok(DetectorReport {
        states: states.len(),
        best_rate: if states.is_empty() {
            0.0
        } else {
            hits[best_channel] as f64 / states.len() as f64
        },
        hits,
        best_channel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{parse_levels, reset, OBS_LEN};
    use crate::nn::Heads;

    #[test]
    fn conv1_dump_shapes() {
        let p = NetworkParams::<f32>::init(Heads::ActorCritic, 1);
        let obs = vec![0.3f32; OBS_LEN];
        let d = dump_feature_maps(&p, &obs, 1, "x").unwrap();
        assert_eq!(d.len(), 32);
        assert!(d.iter().all(|m| m.size == 20 && m.grid.len() == 400 && m.image.len() == 400));
        assert_eq!(dump_feature_maps(&p, &obs, 3, "x").unwrap()[0].grid.len(), 49);
    }

    #[test]
    fn zero_network_gives_zero_maps() {
        let p = NetworkParams::<f32>::zeros(Heads::ActorCritic);
        let obs = vec![0.7f32; OBS_LEN];
        for m in dump_feature_maps(&p, &obs, 2, "z").unwrap() {
            assert!(m.grid.iter().all(|&v| v == 0.0));
            assert!(m.image.iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn receptive_field_centres() {
        // position 0 covers canvas pixels 0..8, centre 4, board pixel 2 -> row 0
        assert_eq!(conv1_position_to_cell(0), 0);
        assert_eq!(conv1_position_to_cell(1), 0);
        assert_eq!(conv1_position_to_cell(2), 1);
        assert_eq!(conv1_position_to_cell(19), 9);
        for j in 0..20 {
            assert_eq!(conv1_position_to_cell(j), (4 * j + 2) / 8);
        }
    }

    #[test]
    fn hand_built_detector_is_found() {
        // channel 5 of conv1 responds to the base palette's agent colour only
        let level =
            parse_levels("; t\n##########\n#        #\n#  @ $ . #\n#        #\n#        #\n#        #\n#        #\n#        #\n#        #\n##########\n")
                .unwrap()
                .remove(0);
        let start = reset(&level).unwrap();
        let states: Vec<_> = start.walkable_region().into_iter().map(|c| start.with_player(c)).collect();
        let mut p = NetworkParams::<f32>::zeros(Heads::ActorCritic);
        let agent = render(&start, PaletteId::Base);
        // template match against the window at conv1 position (2 * row, 2 * col)
        let (py, px) = (8 * start.player().row(), 8 * start.player().col());
        let w = &mut p.layers[0].weight[5 * 192..6 * 192];
        let mut mean = 0.0;
        for c in 0..3 {
            for ky in 0..8 {
                for kx in 0..8 {
                    mean += agent.get(c, py + ky, px + kx);
                }
            }
        }
        mean /= 192.0;
        for c in 0..3 {
            for ky in 0..8 {
                for kx in 0..8 {
                    w[(c * 8 + ky) * 8 + kx] = agent.get(c, py + ky, px + kx) - mean;
                }
            }
        }
        let r = agent_detector_scan(&p, &states, PaletteId::Base).unwrap();
        assert_eq!(r.best_channel, 5);
        assert!(r.best_rate >= 0.8, "{r:?}");
    }
}
