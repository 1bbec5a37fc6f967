//! Synchronous advantage actor-critic over a vector of episode slots.
//!
//! Each update consumes `num_envs * rollout_len` environment steps. Evaluation
//! fires at the first update boundary at or after every multiple of the eval
//! interval and is logged under that multiple; `update_idx` records where it
//! actually ran.

mod env;
mod rollout;

pub use env::{EpisodeRecord, VectorEnv};
pub use rollout::{collect_rollout, n_step_returns, RolloutBatch};

use crate::engine::{Level, LevelError, PaletteId, MAX_EPISODE_STEPS};
use crate::eval::{evaluate, EvalError, EvalMode, EvalPoint};
use crate::levelgen::SetManifest;
use crate::nn::{a2c_loss, save_checkpoint, A2cBatch, A2cStats, Checkpoint, LossCoefs, NetworkParams, NnError, RmsProp, RmsPropConfig};
use crate::seeding::derive_seed;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

const ENV_TAG: u64 = 0x0065_6e76;
const EVAL_TAG: u64 = 0x6576_616c;
pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub lr: f64,
    pub gamma: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub rms_eps: f64,
    pub rms_alpha: f64,
    pub rms_initial_accumulator: f64,
    pub rms_eps_inside_sqrt: bool,
    pub rollout_len: usize,
    pub num_envs: usize,
    /// Global-norm gradient clipping; off by default.
    pub max_grad_norm: Option<f64>,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            lr: 7e-4,
            gamma: 0.99,
            entropy_coef: 0.1,
            value_coef: 0.5,
            rms_eps: 1e-5,
            rms_alpha: 0.99,
            rms_initial_accumulator: 0.0,
            rms_eps_inside_sqrt: false,
            rollout_len: 5,
            num_envs: 30,
            max_grad_norm: None,
        }
    }
}

impl HyperParams {
    pub fn steps_per_update(&self) -> u64 {
        (self.rollout_len * self.num_envs) as u64
    }

    pub fn optimizer(&self) -> RmsPropConfig {
        RmsPropConfig {
            lr: self.lr,
            alpha: self.rms_alpha,
            eps: self.rms_eps,
            initial_accumulator: self.rms_initial_accumulator,
            eps_inside_sqrt: self.rms_eps_inside_sqrt,
        }
    }

    pub fn loss(&self) -> LossCoefs {
        LossCoefs {
            value: self.value_coef,
            entropy: self.entropy_coef,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hyper: HyperParams,
    pub budget_steps: u64,
    pub seed: u64,
    pub palette: PaletteId,
    /// Sequential slot stepping and a zero wall-clock column, so the metrics
    /// file is a pure function of the configuration.
    pub deterministic: bool,
    pub eval_interval: u64,
    pub eval_mode: EvalMode,
    /// Write a checkpoint every this many env steps (plus one at the end).
    pub checkpoint_every: Option<u64>,
    /// Stop after the first evaluation at or above this solved ratio.
    pub stop_at_solved_ratio: Option<f64>,
    /// Task label stored in checkpoints, e.g. `1box`.
    pub task: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hyper: HyperParams::default(),
            budget_steps: 100_000,
            seed: 0,
            palette: PaletteId::Base,
            deterministic: true,
            eval_interval: 1000,
            eval_mode: EvalMode::Sample,
            checkpoint_every: None,
            stop_at_solved_ratio: None,
            task: "1box".into(),
        }
    }
}

/// One metrics line, written at every evaluation point. Losses and returns are
/// averaged over the updates and episodes since the previous line (NaN if none).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub env_steps: u64,
    pub update_idx: u64,
    pub solved_ratio: f64,
    pub mean_episode_return: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub wall_clock_s: f64,
}

pub const METRICS_HEADER: &str = "env_steps,update_idx,solved_ratio,mean_episode_return,policy_loss,value_loss,entropy,wall_clock_s";

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.env_steps, self.update_idx, self.solved_ratio, self.mean_episode_return, self.policy_loss, self.value_loss, self.entropy, self.wall_clock_s
        )
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_line());
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

/// Caller-supplied identity of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub experiment: String,
    /// Effective merged experiment configuration, archived verbatim.
    pub config: serde_json::Value,
    pub level_sets: Vec<SetManifest>,
    pub source_checkpoint: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub crate_version: String,
    pub checkpoint_format: u32,
    pub experiment: String,
    pub config: serde_json::Value,
    pub train: TrainConfig,
    pub level_sets: Vec<SetManifest>,
    pub source_checkpoint: Option<String>,
    /// Modelling choices the results depend on.
    pub design: Vec<(String, String)>,
    pub bit_reproducible: bool,
    pub status: RunStatus,
    pub failure: Option<String>,
    pub env_steps: u64,
    pub updates: u64,
    pub wall_clock_s: f64,
    pub final_solved_ratio: Option<f64>,
    pub best_solved_ratio: Option<f64>,
    /// Files written by the run, relative to its output directory.
    pub artifacts: Vec<String>,
}

fn design_notes(cfg: &TrainConfig) -> Vec<(String, String)> {
    let notes = [
        (
            "init",
            "fan-in uniform U(-b, b), b = gain * sqrt(3 / fan_in); gain sqrt(2) trunk, 0.01 policy, 1 value; zero biases".to_string(),
        ),
        ("optimizer", "rmsprop, non-centered, no momentum".to_string()),
        ("padding", "valid".to_string()),
        ("observation", "84x84x3, 8px tiles, 2px wall margin".to_string()),
        ("eval_mode", format!("{:?}", cfg.eval_mode).to_lowercase()),
        ("eval_step_cap", MAX_EPISODE_STEPS.to_string()),
        ("eval_schedule", "first update boundary at or after each interval multiple".to_string()),
        ("level_sampling", "uniform with replacement per episode".to_string()),
    ];
    notes.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

pub struct TrainReport {
    pub params: NetworkParams<f32>,
    pub manifest: RunManifest,
    pub metrics: Vec<MetricsRow>,
    pub evals: Vec<EvalPoint>,
    pub updates: u64,
    pub env_steps: u64,
}

#[derive(Default)]
struct Window {
    stats: Vec<A2cStats>,
    returns: Vec<f64>,
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len();
    if n == 0 {
        f64::NAN
    } else {
        xs.sum::<f64>() / n as f64
    }
}

struct Output {
    dir: PathBuf,
    metrics: std::fs::File,
    artifacts: Vec<String>,
}

impl Output {
    fn open(dir: &Path) -> Result<Self, TrainError> {
        std::fs::create_dir_all(dir)?;
        let mut metrics = std::fs::File::create(dir.join("metrics.csv"))?;
        writeln!(metrics, "{METRICS_HEADER}")?;
        Ok(Output {
            dir: dir.to_path_buf(),
            metrics,
            artifacts: vec!["metrics.csv".into()],
        })
    }

    fn checkpoint(&mut self, name: &str, ckpt: &Checkpoint) -> Result<(), TrainError> {
        save_checkpoint(&self.dir.join(name), ckpt)?;
        self.artifacts.push(name.into());
        Ok(())
    }

    fn manifest(&mut self, m: &mut RunManifest) -> Result<(), TrainError> {
        if !self.artifacts.iter().any(|a| a == "manifest.json") {
            self.artifacts.push("manifest.json".into());
        }
        m.artifacts = self.artifacts.clone();
        let json = serde_json::to_string_pretty(m).map_err(|e| TrainError::Config(e.to_string()))?;
        std::fs::write(self.dir.join("manifest.json"), json + "\n")?;
        Ok(())
    }
}

/// Runs A2C from `init` until the step budget is spent (whole updates only) or
/// the early-stop threshold is met. With `out_dir`, writes `metrics.csv`,
/// checkpoints and `manifest.json` there.
pub fn train(
    cfg: &TrainConfig,
    init: NetworkParams<f32>,
    train_levels: &[Level],
    test_levels: &[Level],
    out_dir: Option<&Path>,
    info: RunInfo,
) -> Result<TrainReport, TrainError> {
    let hp = &cfg.hyper;
    if hp.num_envs == 0 || hp.rollout_len == 0 || cfg.eval_interval == 0 {
        return Err(TrainError::Config("num_envs, rollout_len and eval_interval must be positive".into()));
    }
    if train_levels.is_empty() || test_levels.is_empty() {
        return Err(TrainError::Config("empty training or test set".into()));
    }
    init.check_shapes()?;
    let started = Instant::now();
    let clock = |cfg: &TrainConfig| if cfg.deterministic { 0.0 } else { started.elapsed().as_secs_f64() };

    let mut manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA,
        crate_version: env!("CARGO_PKG_VERSION").into(),
        checkpoint_format: 1,
        experiment: info.experiment,
        config: info.config,
        train: cfg.clone(),
        level_sets: info.level_sets,
        source_checkpoint: info.source_checkpoint,
        design: design_notes(cfg),
        bit_reproducible: cfg.deterministic,
        status: RunStatus::Running,
        failure: None,
        env_steps: 0,
        updates: 0,
        wall_clock_s: 0.0,
        final_solved_ratio: None,
        best_solved_ratio: None,
        artifacts: Vec::new(),
    };
    let mut out = out_dir.map(Output::open).transpose()?;
    if let Some(o) = out.as_mut() {
        o.manifest(&mut manifest)?;
    }

    let mut params = init;
    let mut opt = RmsProp::new(hp.optimizer(), &params);
    let coefs = hp.loss();
    let mut venv = VectorEnv::new(train_levels, hp.num_envs, derive_seed(cfg.seed, &[ENV_TAG]), cfg.palette)?;
    venv.set_parallel(!cfg.deterministic);
    let per_update = hp.steps_per_update();
    let total_updates = cfg.budget_steps / per_update;

    let mut metrics = Vec::new();
    let mut evals: Vec<EvalPoint> = Vec::new();
    let mut window = Window::default();
    let mut env_steps = 0u64;
    let mut updates = 0u64;
    let mut next_eval = 0u64;
    let mut next_ckpt = cfg.checkpoint_every;

    let result: Result<(), TrainError> = (|| loop {
        if env_steps >= next_eval {
            let mark = next_eval;
            let point = evaluate(&params, test_levels, cfg.palette, cfg.eval_mode, derive_seed(cfg.seed, &[EVAL_TAG, mark]), mark)?;
            let row = MetricsRow {
                env_steps: mark,
                update_idx: updates,
                solved_ratio: point.solved_ratio,
                mean_episode_return: mean(window.returns.iter().copied()),
                policy_loss: mean(window.stats.iter().map(|s| s.policy_loss)),
                value_loss: mean(window.stats.iter().map(|s| s.value_loss)),
                entropy: mean(window.stats.iter().map(|s| s.entropy)),
                wall_clock_s: clock(cfg),
            };
            window = Window::default();
            if let Some(o) = out.as_mut() {
                writeln!(o.metrics, "{}", row.csv_line())?;
                o.metrics.flush()?;
            }
            metrics.push(row);
            evals.push(point);
            next_eval += cfg.eval_interval;
            if cfg.stop_at_solved_ratio.is_some_and(|t| point.solved_ratio >= t) {
                return Ok(());
            }
        }
        if updates >= total_updates {
            return Ok(());
        }

        let batch = collect_rollout(&mut venv, &params, hp.rollout_len, hp.gamma)?;
        let returns = batch.returns_f32();
        let (stats, mut grads) = a2c_loss(
            &params,
            &A2cBatch {
                observations: &batch.observations,
                actions: &batch.actions,
                returns: &returns,
            },
            &coefs,
        )?;
        if let Some(max) = hp.max_grad_norm {
            grads.clip_global_norm(max as f32);
        }
        opt.step(&mut params, &grads)?;
        updates += 1;
        env_steps += per_update;
        window.stats.push(stats);
        window.returns.extend(venv.drain_finished().iter().map(|e| e.episode_return.as_f64()));

        if let (Some(every), Some(at)) = (cfg.checkpoint_every, next_ckpt) {
            if env_steps >= at {
                if let Some(o) = out.as_mut() {
                    let ckpt = Checkpoint {
                        params: params.clone(),
                        source_task: Some(cfg.task.clone()),
                        env_steps,
                    };
                    o.checkpoint(&format!("ckpt_{env_steps:09}.ckpt"), &ckpt)?;
                }
                next_ckpt = Some(at + every);
            }
        }
    })();

    manifest.env_steps = env_steps;
    manifest.updates = updates;
    manifest.wall_clock_s = clock(cfg);
    manifest.final_solved_ratio = evals.last().map(|e| e.solved_ratio);
    manifest.best_solved_ratio = evals.iter().map(|e| e.solved_ratio).reduce(f64::max);
    debug_assert_eq!(env_steps, per_update * updates);
    if let Err(e) = result {
        manifest.status = RunStatus::Failed;
        manifest.failure = Some(e.to_string());
        if let Some(o) = out.as_mut() {
            o.manifest(&mut manifest)?;
        }
        return Err(e);
    }
    manifest.status = RunStatus::Completed;
    if let Some(o) = out.as_mut() {
        let ckpt = Checkpoint {
            params: params.clone(),
            source_task: Some(cfg.task.clone()),
            env_steps,
        };
        o.checkpoint("final.ckpt", &ckpt)?;
        o.manifest(&mut manifest)?;
    }
    Ok(TrainReport {
        params,
        manifest,
        metrics,
        evals,
        updates,
        env_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelgen::{generate, GenConstraints};
    use crate::nn::Heads;

    fn small_cfg(budget: u64) -> TrainConfig {
        TrainConfig {
            budget_steps: budget,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn budget_counts_whole_updates() {
        let set = generate(1, 1, 10, &GenConstraints::trivial()).unwrap();
        let r = train(
            &small_cfg(1500),
            NetworkParams::init(Heads::ActorCritic, 1),
            &set.levels,
            &set.levels[..4],
            None,
            RunInfo::default(),
        )
        .unwrap();
        assert_eq!(r.updates, 10);
        assert_eq!(r.env_steps, 1500);
        // marks 0 and 1000; the second fires after update 7 (1050 steps)
        assert_eq!(r.metrics.iter().map(|m| m.env_steps).collect::<Vec<_>>(), vec![0, 1000]);
        assert_eq!(r.metrics[1].update_idx, 7);
        assert!(r.metrics[0].policy_loss.is_nan());
    }

    #[test]
    fn frozen_layers_survive_training() {
        let set = generate(1, 1, 10, &GenConstraints::trivial()).unwrap();
        let mut init = NetworkParams::init(Heads::ActorCritic, 1);
        init.freeze_mask[0] = true;
        init.freeze_mask[1] = true;
        let before = init.clone();
        let r = train(&small_cfg(300), init, &set.levels, &set.levels[..2], None, RunInfo::default()).unwrap();
        assert_eq!(r.params.layers[0], before.layers[0]);
        assert_eq!(r.params.layers[1], before.layers[1]);
        assert_ne!(r.params.layers[2], before.layers[2]);
    }

    #[test]
    fn output_directory_lists_every_artifact() {
        let set = generate(1, 1, 10, &GenConstraints::trivial()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_cfg(450);
        cfg.checkpoint_every = Some(300);
        let r = train(
            &cfg,
            NetworkParams::init(Heads::ActorCritic, 1),
            &set.levels,
            &set.levels[..2],
            Some(dir.path()),
            RunInfo::default(),
        )
        .unwrap();
        let mut listed = r.manifest.artifacts.clone();
        listed.sort();
        let mut on_disk: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        on_disk.sort();
        assert_eq!(listed, on_disk);
        assert!(listed.contains(&"ckpt_000000300.ckpt".to_string()));
        assert_eq!(std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap(), metrics_csv(&r.metrics));
    }
}
