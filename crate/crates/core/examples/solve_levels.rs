//! Solves a generated set optimally, replays every plan through the engine and
//! prints the optimal-length histogram.
//!
//! cargo run --release --example solve_levels -- [boxes] [count] [seed]

use sokotl::levelgen::{generate, GenConstraints};
use sokotl::planner::{replay_solves, solve_with_limits, LengthHistogram, SearchLimits};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let boxes: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2);
    let count: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(30);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let set = generate(seed, boxes, count, &GenConstraints::default())?;
    let mut lengths = Vec::new();
    for level in &set.levels {
        let (plan, stats) = solve_with_limits(level, SearchLimits::default())?;
        assert!(replay_solves(level, &plan));
        println!("{:<18} {:>3} steps  {:>8} nodes  {}", level.id, plan.len(), stats.explored, plan.to_moves());
        lengths.push(plan.len() as u32);
    }
    let hist = LengthHistogram::from_lengths(lengths);
    println!("\n{}", hist.to_csv());
    println!("{:?}", hist.stats());
    Ok(())
}
