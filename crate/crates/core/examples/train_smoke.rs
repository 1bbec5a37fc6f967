//! From-scratch A2C on ten short one-box levels, stopping once the evaluation
//! solved ratio reaches 0.8.
//!
//! ```text
//! cargo run --release --example train_smoke -- [seed] [budget_steps]
//! ```

use sokotl::levelgen::{generate, GenConstraints};
use sokotl::nn::{Heads, NetworkParams};
use sokotl::trainer::{train, RunInfo, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let budget: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(300_000);
    let levels = generate(2024, 1, 10, &GenConstraints::trivial())?.levels;
    for l in &levels {
        println!("{} optimal {}", l.id, l.optimal_length.unwrap_or(0));
    }
    let cfg = TrainConfig {
        budget_steps: budget,
        seed,
        deterministic: false,
        stop_at_solved_ratio: Some(0.8),
        ..Default::default()
    };
    let report = train(&cfg, NetworkParams::init(Heads::ActorCritic, seed), &levels, &levels, None, RunInfo::default())?;
    for m in &report.metrics {
        println!(
            "steps {:>7}  solved {:.2}  return {:>7.2}  entropy {:.3}  t {:.0}s",
            m.env_steps, m.solved_ratio, m.mean_episode_return, m.entropy, m.wall_clock_s
        );
    }
    println!(
        "finished after {} env steps, best solved ratio {:?}",
        report.env_steps, report.manifest.best_solved_ratio
    );
    Ok(())
}
