//! Lists every registered experiment with its decoded source, target and
//! transfer mode, and prints the default config of one of them.
//!
//! cargo run --release --example experiment_registry -- [name]

use sokotl::experiment::{format_experiment, parse_experiment, ExperimentConfig, REGISTRY};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for name in REGISTRY {
        let id = parse_experiment(name)?;
        assert_eq!(format_experiment(&id)?, name);
        println!(
            "{name:<14} source {:<10} target {:<10} transfer {:?}",
            id.source.label(),
            id.target.label(),
            id.transfer
        );
    }
    let name = std::env::args().nth(1).unwrap_or_else(|| "s1t2k2".into());
    println!("\n{}", ExperimentConfig::from_name(&name)?.to_json());
    Ok(())
}
