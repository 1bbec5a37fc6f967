//! Command-line front end. Every subcommand writes its artifacts plus a
//! `manifest.json` under the output directory; failures print a JSON error
//! record on stderr and exit nonzero.

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sokotl::engine::{reset, PaletteId};
use sokotl::eval::{
    agent_detector_scan, aggregate, dump_feature_maps, evaluate, plot_svg, read_curve_csv, write_feature_dumps, AggregateCurve, EvalMode, PlotCurve,
};
use sokotl::experiment::{run_experiment, ExperimentConfig};
use sokotl::levelgen::{generate, GenConstraints, LevelSet};
use sokotl::nn::{load_checkpoint, save_checkpoint, Checkpoint};
use sokotl::planner::{self, LengthHistogram};
use sokotl::transfer::{make_pretext_dataset, pretext_states, pretrain_locator, PretrainConfig};
use sokotl::verify::run_verify;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sokotl", version, about = "Sokoban transfer and curriculum learning laboratory")]
struct Cli {
    /// Output root; defaults to $SOKOTL_OUT, then `runs`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a solvable level set.
    GenLevels {
        #[arg(long)]
        boxes: usize,
        #[arg(long, default_value_t = 120)]
        count: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Restrict to optimal solutions of at most five steps.
        #[arg(long)]
        trivial: bool,
    },
    /// Solve every level of a set optimally and write the plans.
    Solve {
        #[arg(long)]
        levels: PathBuf,
        #[arg(long, default_value_t = planner::DEFAULT_NODE_BUDGET)]
        budget_nodes: usize,
    },
    /// Optimal-length histogram and summary statistics of a set.
    Stats {
        #[arg(long)]
        levels: PathBuf,
        #[arg(long, default_value_t = planner::DEFAULT_NODE_BUDGET)]
        budget_nodes: usize,
    },
    /// Supervised pre-training of the agent locator.
    PretrainSl {
        #[arg(long)]
        levels: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 2_000)]
        heldout: usize,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 20)]
        walk_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "base")]
        palette: PaletteId,
    },
    /// Train an experiment from scratch (no transfer).
    Train(TrainArgs),
    /// Train an experiment whose network starts from transplanted layers.
    TransferTrain(TrainArgs),
    /// Evaluate a checkpoint on a level set.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        levels: PathBuf,
        #[arg(long, default_value = "base")]
        palette: PaletteId,
        #[arg(long, default_value = "sample")]
        eval_mode: EvalMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Mean curve and 95% interval over per-seed metrics files.
    Aggregate {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
    },
    /// Plot aggregate curves given as `name=path` pairs.
    Plot {
        #[arg(required = true)]
        curves: Vec<String>,
        #[arg(long, default_value = "solved ratio")]
        title: String,
        /// Seed count recorded for each curve.
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Feature maps of a checkpoint on states of a level set, plus the agent-detector scan.
    DumpFeatures {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        levels: PathBuf,
        #[arg(long, default_value_t = 1)]
        layer: usize,
        /// States to dump maps for.
        #[arg(long, default_value_t = 3)]
        count: usize,
        /// States used by the detector scan.
        #[arg(long, default_value_t = 50)]
        scan: usize,
        #[arg(long, default_value = "base")]
        palette: PaletteId,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the invariant suite.
    Verify {
        /// Reduced sample counts.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Registry abbreviation such as `s1t2k2` or `scratch_t1`.
    #[arg(long, required_unless_present = "config")]
    experiment: Option<String>,
    /// Experiment config JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// A seed count (`5` means 0..5) or a comma-separated list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    budget_steps: Option<u64>,
    #[arg(long)]
    source_budget_steps: Option<u64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    deterministic: Option<bool>,
    /// Pre-generated level file used instead of generation.
    #[arg(long)]
    levels: Option<PathBuf>,
    #[arg(long)]
    palette: Option<PaletteId>,
    #[arg(long)]
    eval_mode: Option<EvalMode>,
    #[arg(long)]
    source_checkpoint: Option<PathBuf>,
}

#[derive(Debug)]
struct CliError {
    kind: &'static str,
    message: String,
}

macro_rules! cli_error_from {
    ($($t:ty => $kind:literal),* $(,)?) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError { kind: $kind, message: e.to_string() }
            }
        })*
    };
}

cli_error_from! {
    sokotl::levelgen::GenError => "levelgen",
    sokotl::planner::PlanError => "planner",
    sokotl::nn::NnError => "network",
    sokotl::eval::EvalError => "eval",
    sokotl::transfer::TransferError => "transfer",
    sokotl::experiment::ExperimentError => "experiment",
    std::io::Error => "io",
    serde_json::Error => "json",
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        kind: "usage",
        message: message.into(),
    }
}

#[derive(Serialize)]
struct CommandManifest {
    command: String,
    crate_version: &'static str,
    args: Vec<String>,
    status: &'static str,
    result: serde_json::Value,
    artifacts: Vec<PathBuf>,
}

fn write_manifest(dir: &Path, command: &str, result: serde_json::Value, mut artifacts: Vec<PathBuf>, ok: bool) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("manifest.json");
    artifacts.push(path.clone());
    let m = CommandManifest {
        command: command.into(),
        crate_version: env!("CARGO_PKG_VERSION"),
        args: std::env::args().skip(1).collect(),
        status: if ok { "completed" } else { "failed" },
        result,
        artifacts,
    };
    std::fs::write(path, serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(())
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = |_| usage(format!("bad --seeds value {s:?}"));
    if s.contains(',') {
        s.split(',').map(|x| x.trim().parse().map_err(bad)).collect()
    } else {
        Ok((0..s.trim().parse::<u64>().map_err(bad)?).collect())
    }
}

fn load_set(path: &Path) -> Result<LevelSet, CliError> {
    Ok(LevelSet::load(path)?)
}

fn experiment_config(a: &TrainArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&a.config, &a.experiment) {
        (Some(p), _) => ExperimentConfig::from_json(&std::fs::read_to_string(p)?)?,
        (None, Some(name)) => ExperimentConfig::from_name(name)?,
        (None, None) => return Err(usage("--experiment or --config is required")),
    };
    if let (Some(_), Some(name)) = (&a.config, &a.experiment) {
        if *name != cfg.abbreviation {
            return Err(usage(format!("--experiment {name} disagrees with config {}", cfg.abbreviation)));
        }
    }
    if let Some(s) = &a.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if let Some(b) = a.budget_steps {
        cfg.budget_steps = b;
    }
    if let Some(b) = a.source_budget_steps {
        cfg.source_budget_steps = b;
    }
    if let Some(d) = a.deterministic {
        cfg.deterministic = d;
    }
    if let Some(p) = &a.levels {
        cfg.levels.levels_path = Some(p.clone());
    }
    if let Some(p) = a.palette {
        cfg.palette = p;
    }
    if let Some(m) = a.eval_mode {
        cfg.eval_mode = m;
    }
    if let Some(c) = &a.source_checkpoint {
        cfg.source_checkpoint = Some(c.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_training(a: &TrainArgs, out: &Path, want_transfer: bool) -> Result<serde_json::Value, CliError> {
    let cfg = experiment_config(a)?;
    match (cfg.transfer.is_some(), want_transfer) {
        (true, false) => return Err(usage(format!("{} uses transfer; run transfer-train", cfg.abbreviation))),
        (false, true) => return Err(usage(format!("{} has no transfer; run train", cfg.abbreviation))),
        _ => {}
    }
    let outcome = run_experiment(&cfg, out)?;
    let dir = out.join(&cfg.abbreviation);
    let finals: Vec<_> = outcome.runs.iter().map(|r| r.final_solved_ratio).collect();
    let result = json!({ "experiment": cfg.abbreviation, "seeds": cfg.seeds, "final_solved_ratio": finals });
    write_manifest(&dir, "train", result.clone(), outcome.artifacts, true)?;
    Ok(result)
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    let root = cli
        .out
        .or_else(|| std::env::var_os("SOKOTL_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    match cli.cmd {
        Cmd::GenLevels { boxes, count, seed, trivial } => {
            let constraints = if trivial { GenConstraints::trivial() } else { GenConstraints::default() };
            let set = generate(seed, boxes, count, &constraints)?;
            let dir = root.join("levels");
            let (txt, js) = set.save(&dir, &format!("boxes{boxes}_seed{seed}"))?;
            let result = json!({ "levels": txt, "count": set.len() });
            write_manifest(&dir, "gen-levels", result.clone(), vec![txt, js], true)?;
            Ok(result)
        }
        Cmd::Solve { levels, budget_nodes } => {
            let set = load_set(&levels)?;
            let dir = root.join("solve");
            std::fs::create_dir_all(&dir)?;
            let mut lines = String::new();
            let mut lengths = Vec::new();
            for l in &set.levels {
                let plan = planner::solve_optimal(l, budget_nodes).map_err(|e| CliError {
                    kind: "planner",
                    message: format!("{}: {e}", l.id),
                })?;
                if !planner::replay_solves(l, &plan) {
                    return Err(CliError {
                        kind: "planner",
                        message: format!("{}: plan does not replay", l.id),
                    });
                }
                lines.push_str(&format!("{} {} {}\n", l.id, plan.len(), plan.to_moves()));
                lengths.push(plan.len() as u32);
            }
            let path = dir.join("plans.txt");
            std::fs::write(&path, lines)?;
            let result = json!({ "solved": lengths.len(), "stats": LengthHistogram::from_lengths(lengths).stats() });
            write_manifest(&dir, "solve", result.clone(), vec![path], true)?;
            Ok(result)
        }
        Cmd::Stats { levels, budget_nodes } => {
            let set = load_set(&levels)?;
            let hist = planner::length_histogram(&set.levels, budget_nodes).map_err(|(id, e)| CliError {
                kind: "planner",
                message: format!("{id}: {e}"),
            })?;
            let dir = root.join("stats");
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("lengths.csv");
            std::fs::write(&path, hist.to_csv())?;
            let result = json!({ "levels": hist.total(), "stats": hist.stats() });
            write_manifest(&dir, "stats", result.clone(), vec![path], true)?;
            Ok(result)
        }
        Cmd::PretrainSl {
            levels,
            samples,
            heldout,
            epochs,
            walk_len,
            seed,
            palette,
        } => {
            let set = load_set(&levels)?;
            let data = make_pretext_dataset(&set.levels, samples + heldout, seed, walk_len, palette, &levels.display().to_string())?;
            let (train, held) = data.split_at(samples);
            let dir = root.join("pretrain");
            let (bin, meta) = data.save(&dir, "pretext")?;
            let cfg = PretrainConfig {
                epochs,
                seed,
                ..Default::default()
            };
            let report = pretrain_locator(&train, &held, &cfg)?;
            let ckpt = dir.join("locator.ckpt");
            save_checkpoint(
                &ckpt,
                &Checkpoint {
                    params: report.params.clone(),
                    source_task: Some("prediction".into()),
                    env_steps: 0,
                },
            )?;
            let result = json!({
                "initial_heldout_accuracy": report.initial_heldout_accuracy,
                "history": report.history,
                "checkpoint": ckpt,
            });
            write_manifest(&dir, "pretrain-sl", result.clone(), vec![bin, meta, ckpt], true)?;
            Ok(result)
        }
        Cmd::Train(a) => run_training(&a, &root, false),
        Cmd::TransferTrain(a) => run_training(&a, &root, true),
        Cmd::Eval {
            checkpoint,
            levels,
            palette,
            eval_mode,
            seed,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let set = load_set(&levels)?;
            let point = evaluate(&ckpt.params, &set.levels, palette, eval_mode, seed, ckpt.env_steps)?;
            let dir = root.join("eval");
            let path = dir.join("eval.json");
            std::fs::create_dir_all(&dir)?;
            std::fs::write(&path, serde_json::to_string_pretty(&point)? + "\n")?;
            let result = serde_json::to_value(point)?;
            write_manifest(&dir, "eval", result.clone(), vec![path], true)?;
            Ok(result)
        }
        Cmd::Aggregate { metrics } => {
            let runs = metrics.iter().map(|p| read_curve_csv(p)).collect::<Result<Vec<_>, _>>()?;
            let curve = aggregate(&runs)?;
            let dir = root.join("aggregate");
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("aggregate.csv");
            std::fs::write(&path, curve.to_csv())?;
            let result = json!({ "points": curve.env_steps.len(), "seeds": curve.seeds, "final_mean": curve.mean.last() });
            write_manifest(&dir, "aggregate", result.clone(), vec![path], true)?;
            Ok(result)
        }
        Cmd::Plot { curves, title, seeds } => {
            let mut loaded = Vec::new();
            for c in &curves {
                let (name, path) = c.split_once('=').ok_or_else(|| usage(format!("expected name=path, got {c:?}")))?;
                loaded.push((name.to_string(), AggregateCurve::from_csv(&std::fs::read_to_string(path)?, seeds)?));
            }
            let plot: Vec<PlotCurve> = loaded.iter().map(|(name, curve)| PlotCurve { name, curve }).collect();
            let svg = plot_svg(&plot, &title)?;
            let dir = root.join("plot");
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("plot.svg");
            std::fs::write(&path, svg)?;
            let result = json!({ "svg": path });
            write_manifest(&dir, "plot", result.clone(), vec![path], true)?;
            Ok(result)
        }
        Cmd::DumpFeatures {
            checkpoint,
            levels,
            layer,
            count,
            scan,
            palette,
            seed,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let set = load_set(&levels)?;
            let dir = root.join("features");
            let mut dumps = Vec::new();
            for (i, l) in set.levels.iter().take(count).enumerate() {
                let obs = sokotl::engine::render(
                    &reset(l).map_err(|e| CliError {
                        kind: "level",
                        message: e.to_string(),
                    })?,
                    palette,
                );
                dumps.extend(dump_feature_maps(&ckpt.params, obs.pixels(), layer, &format!("{i:03}_{}", l.id))?);
            }
            let mut artifacts = write_feature_dumps(&dir, &dumps)?;
            let states = pretext_states(&set.levels, scan, seed, 20)?;
            let report = agent_detector_scan(&ckpt.params, &states, palette)?;
            let path = dir.join("detector.json");
            std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
            artifacts.push(path);
            let result = json!({ "maps": dumps.len(), "best_channel": report.best_channel, "best_rate": report.best_rate });
            write_manifest(&dir, "dump-features", result.clone(), artifacts, true)?;
            Ok(result)
        }
        Cmd::Verify { quick, seed } => {
            let checks = run_verify(quick, seed);
            for c in &checks {
                eprintln!("{} {:<34} {:>7.1}s  {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.seconds, c.detail);
            }
            let ok = checks.iter().all(|c| c.passed);
            let dir = root.join("verify");
            let result = serde_json::to_value(&checks)?;
            write_manifest(&dir, "verify", result.clone(), Vec::new(), ok)?;
            if ok {
                Ok(result)
            } else {
                let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                Err(CliError {
                    kind: "verify",
                    message: format!("failed checks: {}", failed.join(", ")),
                })
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": { "kind": "usage", "message": e.to_string().trim() } }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(result) => {
            println!("{}", serde_json::to_string_pretty(&result).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": { "kind": e.kind, "message": e.message } }));
            ExitCode::FAILURE
        }
    }
}
