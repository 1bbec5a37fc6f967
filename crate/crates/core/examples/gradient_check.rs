//! Compares analytic gradients with central finite differences in double
//! precision, layer by layer, for the actor-critic and locator objectives.
//!
//! cargo run --release --example gradient_check -- [coords_per_layer]

use sokotl::levelgen::{generate, GenConstraints};
use sokotl::nn::{A2cBatch, Heads, LossCoefs, NetworkParams};
use sokotl::oracle::{check_batch, gradient_check, GradCheckConfig, Objective};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let coords: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(24);
    let levels = generate(5, 2, 6, &GenConstraints::default())?.levels;
    let (obs, actions, returns) = check_batch(&levels, 6, 5);
    let cfg = GradCheckConfig {
        coords_per_layer: coords,
        ..Default::default()
    };
    let ac: NetworkParams<f64> = NetworkParams::<f32>::init(Heads::ActorCritic, 5).cast();
    println!("parameters: {}", NetworkParams::<f32>::init(Heads::ActorCritic, 5).param_count());
    let a2c = Objective::A2c {
        batch: A2cBatch {
            observations: &obs,
            actions: &actions,
            returns: &returns,
        },
        coefs: LossCoefs::default(),
    };
    let labels: Vec<usize> = vec![12, 25, 38, 51, 64, 77];
    let loc: NetworkParams<f64> = NetworkParams::<f32>::init(Heads::Locator, 5).cast();
    let ce = Objective::CrossEntropy {
        observations: &obs,
        labels: &labels,
    };
    for (name, params, obj) in [("actor-critic", &ac, &a2c), ("locator", &loc, &ce)] {
        println!("\n{name}");
        for c in gradient_check(params, obj, &cfg)? {
            println!(
                "  {:<8} checked {:>3} skipped {:>2} max rel err {:.2e}",
                c.layer, c.checked, c.skipped, c.max_rel_err
            );
        }
    }
    Ok(())
}
