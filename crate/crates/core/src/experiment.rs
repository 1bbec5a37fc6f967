//! Experiment descriptors, the named registry, and the multi-seed runner.
//!
//! Names follow `s{1|2|3|P}t{1|2|3}k{1|2|3}` (source task, target task, frozen
//! conv depth) or `s1t1fc_game2`. From-scratch baselines use `scratch_t{1|2|3}`
//! and `scratch_t1_game2`.

use crate::engine::{Level, PaletteId};
use crate::eval::{aggregate, plot_svg, AggregateCurve, EvalError, EvalMode, PlotCurve, Series};
use crate::levelgen::{generate, split, GenConstraints, GenError, LevelSet, SetManifest, SplitMode};
use crate::nn::{load_checkpoint, save_checkpoint, Checkpoint, Heads, NetworkParams, NnError};
use crate::seeding::derive_seed;
use crate::trainer::{train, HyperParams, RunInfo, RunManifest, TrainConfig, TrainError};
use crate::transfer::{apply_transfer, make_pretext_dataset, pretrain_locator, PretrainConfig, TransferError, TransferMode};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CONFIG_SCHEMA: u32 = 1;
const REINIT_TAG: u64 = 0x7265_696e;
const INIT_TAG: u64 = 0x696e_6974;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("malformed experiment name {0:?}")]
    Malformed(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SourceTask {
    #[serde(rename = "1box")]
    OneBox,
    #[serde(rename = "2boxes")]
    TwoBoxes,
    #[serde(rename = "3boxes")]
    ThreeBoxes,
    #[serde(rename = "prediction")]
    Prediction,
    #[serde(rename = "none")]
    None,
}

impl SourceTask {
    pub fn box_count(self) -> Option<usize> {
        match self {
            SourceTask::OneBox => Some(1),
            SourceTask::TwoBoxes => Some(2),
            SourceTask::ThreeBoxes => Some(3),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SourceTask::OneBox => "1box",
            SourceTask::TwoBoxes => "2boxes",
            SourceTask::ThreeBoxes => "3boxes",
            SourceTask::Prediction => "prediction",
            SourceTask::None => "none",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TargetTask {
    #[serde(rename = "1box")]
    OneBox,
    #[serde(rename = "2boxes")]
    TwoBoxes,
    #[serde(rename = "3boxes")]
    ThreeBoxes,
    #[serde(rename = "1box_game2")]
    OneBoxGame2,
}

impl TargetTask {
    pub fn box_count(self) -> usize {
        match self {
            TargetTask::OneBox | TargetTask::OneBoxGame2 => 1,
            TargetTask::TwoBoxes => 2,
            TargetTask::ThreeBoxes => 3,
        }
    }

    pub fn palette(self) -> PaletteId {
        match self {
            TargetTask::OneBoxGame2 => PaletteId::Game2,
            _ => PaletteId::Base,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TargetTask::OneBox => "1box",
            TargetTask::TwoBoxes => "2boxes",
            TargetTask::ThreeBoxes => "3boxes",
            TargetTask::OneBoxGame2 => "1box_game2",
        }
    }

    fn from_digit(d: char) -> Option<TargetTask> {
        match d {
            '1' => Some(TargetTask::OneBox),
            '2' => Some(TargetTask::TwoBoxes),
            '3' => Some(TargetTask::ThreeBoxes),
            _ => None,
        }
    }
}

/// The parts of an experiment its name determines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExperimentId {
    pub source: SourceTask,
    pub target: TargetTask,
    /// `None` trains from scratch.
    pub transfer: Option<TransferMode>,
}

pub fn parse_experiment(name: &str) -> Result<ExperimentId, ExperimentError> {
    let bad = || ExperimentError::Malformed(name.to_string());
    match name {
        "s1t1fc_game2" => {
            return Ok(ExperimentId {
                source: SourceTask::OneBox,
                target: TargetTask::OneBoxGame2,
                transfer: Some(TransferMode::FcOnly),
            })
        }
        "scratch_t1_game2" => {
            return Ok(ExperimentId {
                source: SourceTask::None,
                target: TargetTask::OneBoxGame2,
                transfer: None,
            })
        }
        _ => {}
    }
    if let Some(rest) = name.strip_prefix("scratch_t") {
        let mut cs = rest.chars();
        let (Some(d), None) = (cs.next(), cs.next()) else { return Err(bad()) };
        return Ok(ExperimentId {
            source: SourceTask::None,
            target: TargetTask::from_digit(d).ok_or_else(bad)?,
            transfer: None,
        });
    }
    let c: Vec<char> = name.chars().collect();
    if c.len() != 6 || c[0] != 's' || c[2] != 't' || c[4] != 'k' {
        return Err(bad());
    }
    let source = match c[1] {
        '1' => SourceTask::OneBox,
        '2' => SourceTask::TwoBoxes,
        '3' => SourceTask::ThreeBoxes,
        'P' => SourceTask::Prediction,
        _ => return Err(bad()),
    };
    let target = TargetTask::from_digit(c[3]).ok_or_else(bad)?;
    let k = match c[5] {
        '1' => 1,
        '2' => 2,
        '3' => 3,
        _ => return Err(bad()),
    };
    Ok(ExperimentId {
        source,
        target,
        transfer: Some(TransferMode::ConvK(k)),
    })
}

pub fn format_experiment(id: &ExperimentId) -> Result<String, ExperimentError> {
    let t = match id.target {
        TargetTask::OneBox => '1',
        TargetTask::TwoBoxes => '2',
        TargetTask::ThreeBoxes => '3',
        TargetTask::OneBoxGame2 => {
            return match (id.source, id.transfer) {
                (SourceTask::OneBox, Some(TransferMode::FcOnly)) => Ok("s1t1fc_game2".into()),
                (SourceTask::None, None) => Ok("scratch_t1_game2".into()),
                _ => Err(ExperimentError::Config(format!("{id:?} has no name"))),
            }
        }
    };
    match (id.source, id.transfer) {
        (SourceTask::None, None) => Ok(format!("scratch_t{t}")),
        (src, Some(TransferMode::ConvK(k @ 1..=3))) if src != SourceTask::None => {
            let s = match src {
                SourceTask::OneBox => '1',
                SourceTask::TwoBoxes => '2',
                SourceTask::ThreeBoxes => '3',
                _ => 'P',
            };
            Ok(format!("s{s}t{t}k{k}"))
        }
        _ => Err(ExperimentError::Config(format!("{id:?} has no name"))),
    }
}

/// The 17 transfer experiments.
pub const REGISTRY: [&str; 17] = [
    "s1t1k3",
    "s2t1k1",
    "s2t1k2",
    "s2t1k3",
    "s3t1k1",
    "s3t1k2",
    "s3t1k3",
    "sPt1k1",
    "s1t1fc_game2",
    "s1t2k2",
    "s1t2k3",
    "s2t2k3",
    "s1t3k1",
    "s1t3k2",
    "s1t3k3",
    "s2t3k3",
    "s1t2k1",
];

/// Where training and test levels come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LevelPlan {
    pub gen_seed: u64,
    pub train_count: usize,
    pub test_count: usize,
    pub split_mode: SplitMode,
    pub constraints: GenConstraints,
    /// Pre-generated level file; replaces generation when set.
    pub levels_path: Option<PathBuf>,
}

impl Default for LevelPlan {
    fn default() -> Self {
        LevelPlan {
            gen_seed: 7,
            train_count: 100,
            test_count: 20,
            split_mode: SplitMode::Disjoint,
            constraints: GenConstraints::default(),
            levels_path: None,
        }
    }
}

impl LevelPlan {
    /// Training and test sets for `box_count` boxes.
    pub fn build(&self, box_count: usize) -> Result<(LevelSet, LevelSet), ExperimentError> {
        let pool = match &self.levels_path {
            Some(p) => LevelSet::load(p)?,
            None => {
                let n = match self.split_mode {
                    SplitMode::Disjoint => self.train_count + self.test_count,
                    SplitMode::Overlapping => self.train_count.max(self.test_count),
                };
                generate(self.gen_seed, box_count, n, &self.constraints)?
            }
        };
        Ok(split(&pool, self.train_count, self.test_count, self.gen_seed, self.split_mode)?)
    }
}

/// A complete, serializable experiment description. Flags override file fields
/// and the merged result is archived in every run manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub abbreviation: String,
    pub source_task: SourceTask,
    pub target_task: TargetTask,
    pub transfer: Option<TransferMode>,
    pub seeds: Vec<u64>,
    pub hyper: HyperParams,
    pub budget_steps: u64,
    /// Budget for training source networks when no checkpoint is given.
    pub source_budget_steps: u64,
    pub levels: LevelPlan,
    pub palette: PaletteId,
    pub eval_mode: EvalMode,
    pub eval_interval: u64,
    pub deterministic: bool,
    /// Source weights; trained on the fly (one per seed) when absent.
    pub source_checkpoint: Option<PathBuf>,
    pub pretext: PretextPlan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretextPlan {
    pub samples: usize,
    pub heldout: usize,
    pub walk_len: usize,
    pub epochs: usize,
    pub target_accuracy: Option<f64>,
}

impl Default for PretextPlan {
    fn default() -> Self {
        PretextPlan {
            samples: 10_000,
            heldout: 2_000,
            walk_len: 20,
            epochs: 20,
            target_accuracy: Some(0.95),
        }
    }
}

impl ExperimentConfig {
    pub fn from_name(name: &str) -> Result<Self, ExperimentError> {
        let id = parse_experiment(name)?;
        Ok(ExperimentConfig {
            schema_version: CONFIG_SCHEMA,
            abbreviation: name.to_string(),
            source_task: id.source,
            target_task: id.target,
            transfer: id.transfer,
            seeds: (0..5).collect(),
            hyper: HyperParams::default(),
            budget_steps: 1_000_000,
            source_budget_steps: 1_000_000,
            levels: LevelPlan::default(),
            palette: id.target.palette(),
            eval_mode: EvalMode::Sample,
            eval_interval: 1000,
            deterministic: true,
            source_checkpoint: None,
            pretext: PretextPlan::default(),
        })
    }

    pub fn id(&self) -> ExperimentId {
        ExperimentId {
            source: self.source_task,
            target: self.target_task,
            transfer: self.transfer,
        }
    }

    /// The name agrees with the fields and the schema version is known.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.schema_version != CONFIG_SCHEMA {
            return Err(ExperimentError::Config(format!("unsupported schema version {}", self.schema_version)));
        }
        if parse_experiment(&self.abbreviation)? != self.id() {
            return Err(ExperimentError::Config(format!("name {} disagrees with its fields", self.abbreviation)));
        }
        if self.seeds.is_empty() {
            return Err(ExperimentError::Config("no seeds".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn train_config(&self, seed: u64, task: &str) -> TrainConfig {
        TrainConfig {
            hyper: self.hyper,
            budget_steps: self.budget_steps,
            seed,
            palette: self.palette,
            deterministic: self.deterministic,
            eval_interval: self.eval_interval,
            eval_mode: self.eval_mode,
            checkpoint_every: None,
            stop_at_solved_ratio: None,
            task: task.into(),
        }
    }
}

/// Files produced by [`run_experiment`].
pub struct ExperimentOutcome {
    pub runs: Vec<RunManifest>,
    pub curve: Option<AggregateCurve>,
    pub artifacts: Vec<PathBuf>,
}

fn source_params(cfg: &ExperimentConfig, seed: u64, out: &Path, artifacts: &mut Vec<PathBuf>) -> Result<NetworkParams<f32>, ExperimentError> {
    if let Some(path) = &cfg.source_checkpoint {
        return Ok(load_checkpoint(path)?.params);
    }
    let dir = out.join(format!("source_{}_seed{seed}", cfg.source_task.label()));
    match cfg.source_task.box_count() {
        Some(n) => {
            let (train_set, test_set) = cfg.levels.build(n)?;
            let mut tc = cfg.train_config(seed, cfg.source_task.label());
            tc.budget_steps = cfg.source_budget_steps;
            tc.palette = PaletteId::Base;
            let info = RunInfo {
                experiment: format!("scratch_t{n}"),
                config: serde_json::to_value(cfg).expect("config serializes"),
                level_sets: vec![train_set.manifest(), test_set.manifest()],
                source_checkpoint: None,
            };
            let report = train(
                &tc,
                NetworkParams::init(Heads::ActorCritic, derive_seed(seed, &[INIT_TAG, 1])),
                &train_set.levels,
                &test_set.levels,
                Some(&dir),
                info,
            )?;
            artifacts.extend(report.manifest.artifacts.iter().map(|a| dir.join(a)));
            Ok(report.params)
        }
        None if cfg.source_task == SourceTask::Prediction => {
            let (train_set, _) = cfg.levels.build(cfg.target_task.box_count())?;
            let p = &cfg.pretext;
            let data = make_pretext_dataset(
                &train_set.levels,
                p.samples + p.heldout,
                seed,
                p.walk_len,
                cfg.palette,
                &format!("{}-levels-seed{}", cfg.target_task.label(), cfg.levels.gen_seed),
            )?;
            let (tr, held) = data.split_at(p.samples);
            let pc = PretrainConfig {
                epochs: p.epochs,
                seed,
                optimizer: cfg.hyper.optimizer(),
                target_accuracy: p.target_accuracy,
                ..Default::default()
            };
            let report = pretrain_locator(&tr, &held, &pc)?;
            let path = dir.join("locator.ckpt");
            save_checkpoint(
                &path,
                &Checkpoint {
                    params: report.params.clone(),
                    source_task: Some("prediction".into()),
                    env_steps: 0,
                },
            )?;
            let hist = dir.join("pretrain.json");
            std::fs::write(&hist, serde_json::to_string_pretty(&report.history).expect("serializes") + "\n")?;
            artifacts.extend([path, hist]);
            Ok(report.params)
        }
        None => Err(ExperimentError::Config("transfer without a source task".into())),
    }
}

/// Initial network for one seed of an experiment.
pub fn initial_params(cfg: &ExperimentConfig, seed: u64, out: &Path, artifacts: &mut Vec<PathBuf>) -> Result<NetworkParams<f32>, ExperimentError> {
    match cfg.transfer {
        None => Ok(NetworkParams::init(Heads::ActorCritic, derive_seed(seed, &[INIT_TAG, 0]))),
        Some(mode) => {
            let src = source_params(cfg, seed, out, artifacts)?;
            Ok(apply_transfer(&src, mode, derive_seed(seed, &[REINIT_TAG]))?)
        }
    }
}

/// Trains every seed of `cfg` under `out/<name>/`, then aggregates and plots
/// when there are at least two seeds.
pub fn run_experiment(cfg: &ExperimentConfig, out_root: &Path) -> Result<ExperimentOutcome, ExperimentError> {
    cfg.validate()?;
    let out = out_root.join(&cfg.abbreviation);
    std::fs::create_dir_all(&out)?;
    let config_path = out.join("config.json");
    std::fs::write(&config_path, cfg.to_json() + "\n")?;
    let mut artifacts = vec![config_path];
    let (train_set, test_set) = cfg.levels.build(cfg.target_task.box_count())?;
    let level_sets: Vec<SetManifest> = vec![train_set.manifest(), test_set.manifest()];
    let mut runs = Vec::new();
    let mut series: Vec<Series> = Vec::new();
    for &seed in &cfg.seeds {
        let init = initial_params(cfg, seed, &out, &mut artifacts)?;
        let dir = out.join(format!("seed{seed}"));
        let info = RunInfo {
            experiment: cfg.abbreviation.clone(),
            config: serde_json::to_value(cfg).expect("config serializes"),
            level_sets: level_sets.clone(),
            source_checkpoint: cfg.source_checkpoint.as_ref().map(|p| p.display().to_string()),
        };
        let report = train(
            &cfg.train_config(seed, cfg.target_task.label()),
            init,
            &train_set.levels,
            &test_set.levels,
            Some(&dir),
            info,
        )?;
        artifacts.extend(report.manifest.artifacts.iter().map(|a| dir.join(a)));
        series.push(report.evals.iter().map(|e| (e.env_steps, e.solved_ratio)).collect());
        runs.push(report.manifest);
    }
    let curve = if series.len() >= 2 {
        let curve = aggregate(&series)?;
        let csv = out.join("aggregate.csv");
        std::fs::write(&csv, curve.to_csv())?;
        let svg = out.join("solved_ratio.svg");
        std::fs::write(
            &svg,
            plot_svg(
                &[PlotCurve {
                    name: &cfg.abbreviation,
                    curve: &curve,
                }],
                &cfg.abbreviation,
            )?,
        )?;
        artifacts.extend([csv, svg]);
        Some(curve)
    } else {
        None
    };
    Ok(ExperimentOutcome { runs, curve, artifacts })
}

/// Levels of the set referenced by `plan` for `box_count`, train then test.
pub fn plan_levels(plan: &LevelPlan, box_count: usize) -> Result<(Vec<Level>, Vec<Level>), ExperimentError> {
    let (a, b) = plan.build(box_count)?;
    Ok((a.levels, b.levels))
}
