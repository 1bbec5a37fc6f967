//! Generates 1-, 2- and 3-box level sets and prints their optimal-length statistics.
//!
//! cargo run --release --example generate_levels -- [seed] [count]

use sokotl::levelgen::{generate, GenConstraints};
use sokotl::planner::LengthHistogram;
use std::time::Instant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let count: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(100);
    let constraints = GenConstraints::default();
    for boxes in 1..=3 {
        let t = Instant::now();
        let set = generate(seed, boxes, count, &constraints)?;
        let hist = LengthHistogram::from_lengths(set.levels.iter().filter_map(|l| l.optimal_length));
        let s = hist.stats().expect("non-empty set");
        println!(
            "{boxes} box(es): {count} levels in {:.1}s  min {} median {} max {} mean {:.1}",
            t.elapsed().as_secs_f64(),
            s.min,
            s.median,
            s.max,
            s.mean
        );
    }
    if let Some(first) = generate(seed, 1, 1, &constraints)?.levels.first() {
        print!("\nfirst 1-box level:\n{}", first.to_text());
    }
    Ok(())
}
