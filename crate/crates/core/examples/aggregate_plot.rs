//! Aggregates per-seed solved-ratio curves into a mean with a 95% interval and
//! renders them as SVG.
//!
//! cargo run --release --example aggregate_plot -- [out.svg]

use sokotl::eval::{aggregate, plot_svg, PlotCurve};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| std::env::temp_dir().join("sokotl_curves.svg").display().to_string());
    let marks: Vec<u64> = (0..=10).map(|i| i * 1000).collect();
    let curve_for = |rate: f64, jitter: f64| -> Vec<Vec<(u64, f64)>> {
        (0..5)
            .map(|s| {
                marks
                    .iter()
                    .map(|&m| (m, (rate * m as f64 / 10_000.0 + jitter * (s as f64 - 2.0)).clamp(0.0, 1.0)))
                    .collect()
            })
            .collect()
    };
    let fast = aggregate(&curve_for(0.9, 0.03))?;
    let slow = aggregate(&curve_for(0.5, 0.05))?;
    print!("{}", fast.to_csv());
    let svg = plot_svg(
        &[
            PlotCurve {
                name: "transfer",
                curve: &fast,
            },
            PlotCurve { name: "scratch", curve: &slow },
        ],
        "solved ratio",
    )?;
    std::fs::write(&out, svg)?;
    println!("wrote {out}");
    Ok(())
}
