//! Transplants layers from a source network, trains the target briefly and
//! shows that transplanted layers are bit-identical while the rest moved.
//!
//! cargo run --release --example transfer_freeze -- [env_steps]

use sokotl::levelgen::{generate, GenConstraints};
use sokotl::nn::{Heads, NetworkParams};
use sokotl::trainer::{train, RunInfo, TrainConfig};
use sokotl::transfer::{apply_transfer, TransferMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3000);
    let levels = generate(11, 1, 20, &GenConstraints::trivial())?.levels;
    let source = NetworkParams::<f32>::init(Heads::ActorCritic, 100);
    for mode in [TransferMode::ConvK(1), TransferMode::ConvK(2), TransferMode::ConvK(3), TransferMode::FcOnly] {
        let init = apply_transfer(&source, mode, 7)?;
        let cfg = TrainConfig {
            budget_steps: steps,
            eval_interval: steps,
            ..Default::default()
        };
        let report = train(&cfg, init.clone(), &levels, &levels, None, RunInfo::default())?;
        let summary: Vec<String> = report
            .params
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let state = if l == &source.layers[i] { "same" } else { "changed" };
                format!("{}{}={state}", l.name, if report.params.freeze_mask[i] { "*" } else { "" })
            })
            .collect();
        println!("{mode:?}: {}", summary.join(" "));
    }
    Ok(())
}
