//! Builds the agent-location dataset from random walks and trains the 100-way
//! locator head, printing held-out accuracy per epoch.
//!
//! cargo run --release --example pretext_locator -- [samples] [epochs]

use sokotl::engine::PaletteId;
use sokotl::levelgen::{generate, GenConstraints};
use sokotl::transfer::{make_pretext_dataset, pretrain_locator, PretrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let samples: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10_000);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    let levels = generate(7, 1, 100, &GenConstraints::default())?.levels;
    let data = make_pretext_dataset(&levels, samples + samples / 5, 3, 20, PaletteId::Base, "1box-seed7")?;
    let (train, heldout) = data.split_at(samples);
    let cfg = PretrainConfig {
        epochs,
        target_accuracy: Some(0.95),
        ..Default::default()
    };
    let report = pretrain_locator(&train, &heldout, &cfg)?;
    println!("untrained held-out accuracy {:.3}", report.initial_heldout_accuracy);
    for e in &report.history {
        println!(
            "epoch {:>2}  loss {:.4}  train {:.3}  held-out {:.3}",
            e.epoch, e.train_loss, e.train_accuracy, e.heldout_accuracy
        );
    }
    Ok(())
}
