//! Writes conv feature maps of a few observations as PGM images and scans conv1
//! channels for an agent detector.
//!
//! cargo run --release --example feature_maps -- [checkpoint] [out_dir]

use sokotl::engine::{render, reset, PaletteId};
use sokotl::eval::{agent_detector_scan, dump_feature_maps, write_feature_dumps};
use sokotl::levelgen::{generate, GenConstraints};
use sokotl::nn::{load_checkpoint, Heads, NetworkParams};
use sokotl::transfer::pretext_states;
use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let params = match args.next() {
        Some(path) => load_checkpoint(&PathBuf::from(path))?.params,
        None => NetworkParams::init(Heads::ActorCritic, 0),
    };
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("sokotl_features"));
    let one = generate(7, 1, 10, &GenConstraints::default())?.levels;
    let mut dumps = Vec::new();
    for layer in 1..=3 {
        let obs = render(&reset(&one[0])?, PaletteId::Base);
        dumps.extend(dump_feature_maps(&params, obs.pixels(), layer, &one[0].id)?);
    }
    let files = write_feature_dumps(&out, &dumps)?;
    println!("wrote {} files to {}", files.len(), out.display());
    let mut states = pretext_states(&one, 25, 1, 20)?;
    states.extend(pretext_states(&generate(7, 3, 10, &GenConstraints::default())?.levels, 25, 2, 20)?);
    let report = agent_detector_scan(&params, &states, PaletteId::Base)?;
    println!(
        "conv1 channel {} puts its maximum on the agent in {:.0}% of {} states",
        report.best_channel,
        100.0 * report.best_rate,
        report.states
    );
    Ok(())
}
