//! Solved-ratio evaluation, multi-seed aggregation, plots and feature-map export.
//!
//! An evaluation plays one episode per test level. All episodes advance in
//! lockstep so the network sees one batch per step, and each episode draws its
//! actions from its own stream of the evaluation seed.

mod aggregate;
mod features;
mod plot;

pub use aggregate::{aggregate, read_curve_csv, AggregateCurve, Series};
pub use features::{agent_detector_scan, conv1_position_to_cell, dump_feature_maps, write_feature_dumps, DetectorReport, FeatureMapDump};
pub use plot::{plot_svg, PlotCurve};

use crate::engine::{self, render, Action, GameState, Level, LevelError, PaletteId, MAX_EPISODE_STEPS, OBS_LEN};
use crate::nn::{forward, softmax_rows, NetworkParams, NnError};
use crate::planner::{self, Plan, PlanError};
use crate::seeding::stream_rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const EVAL_TAG: u64 = 0x6576_616c;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error("planner failed on {id}: {source}")]
    Plan { id: String, source: PlanError },
    #[error("aggregation: {0}")]
    Aggregate(String),
    #[error("plot: {0}")]
    Plot(String),
    #[error("empty test set")]
    EmptyTestSet,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How actions are chosen from the policy during evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    #[default]
    Sample,
    Argmax,
}

impl std::str::FromStr for EvalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sample" => Ok(EvalMode::Sample),
            "argmax" => Ok(EvalMode::Argmax),
            other => Err(format!("unknown eval mode {other:?} (expected sample or argmax)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub env_steps: u64,
    pub solved_ratio: f64,
    pub solved: usize,
    pub episodes: usize,
    pub eval_seed: u64,
}

/// Action distributions for a batch of live episodes.
pub trait Policy {
    /// `episodes[i]` is the test-level index of `states[i]`; returns one
    /// probability row per state.
    fn probabilities(&mut self, episodes: &[usize], states: &[GameState], palette: PaletteId) -> Result<Vec<[f64; 4]>, EvalError>;
}

/// The network's softmax policy.
pub struct NetworkPolicy<'a> {
    pub params: &'a NetworkParams<f32>,
}

impl Policy for NetworkPolicy<'_> {
    fn probabilities(&mut self, _episodes: &[usize], states: &[GameState], palette: PaletteId) -> Result<Vec<[f64; 4]>, EvalError> {
        let obs = render_batch(states, palette);
        let out = forward(self.params, &obs)?;
        let p = softmax_rows(&out.logits, out.logit_count);
        Ok(p.chunks(Action::COUNT).map(|r| [r[0] as f64, r[1] as f64, r[2] as f64, r[3] as f64]).collect())
    }
}

/// Uniformly random actions.
pub struct UniformPolicy;

impl Policy for UniformPolicy {
    fn probabilities(&mut self, _episodes: &[usize], states: &[GameState], _palette: PaletteId) -> Result<Vec<[f64; 4]>, EvalError> {
        Ok(vec![[0.25; 4]; states.len()])
    }
}

/// Replays optimal plans: a one-hot distribution on the plan's next action.
pub struct PlanReplayPolicy {
    plans: Vec<Plan>,
}

impl PlanReplayPolicy {
    pub fn new(levels: &[Level], node_budget: usize) -> Result<Self, EvalError> {
        let plans = levels
            .iter()
            .map(|l| planner::solve_optimal(l, node_budget).map_err(|source| EvalError::Plan { id: l.id.clone(), source }))
            .collect::<Result<_, _>>()?;
        Ok(PlanReplayPolicy { plans })
    }
}

impl Policy for PlanReplayPolicy {
    fn probabilities(&mut self, episodes: &[usize], states: &[GameState], _palette: PaletteId) -> Result<Vec<[f64; 4]>, EvalError> {
        Ok(episodes
            .iter()
            .zip(states)
            .map(|(&e, s)| {
                let mut row = [0.0; 4];
                let a = self.plans[e].actions.get(s.steps_taken() as usize).copied().unwrap_or(Action::Up);
                row[a.index()] = 1.0;
                row
            })
            .collect())
    }
}

/// Flat observation batch for `states`.
pub fn render_batch(states: &[GameState], palette: PaletteId) -> Vec<f32> {
    let mut obs = Vec::with_capacity(states.len() * OBS_LEN);
    for s in states {
        obs.extend_from_slice(render(s, palette).pixels());
    }
    obs
}

/// Inverse-CDF draw from `probs`; falls back to the last index on rounding slack.
pub fn sample_action(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Highest-probability action; the lowest index wins ties.
pub fn greedy_action(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Plays one episode per test level under `policy`. Episode `i` uses stream
/// `(eval_seed, i)`, so the result depends only on the policy, the levels and the seed.
pub fn evaluate_policy<P: Policy + ?Sized>(
    policy: &mut P,
    test: &[Level],
    palette: PaletteId,
    mode: EvalMode,
    eval_seed: u64,
    env_steps: u64,
) -> Result<EvalPoint, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let mut states = test.iter().map(engine::reset).collect::<Result<Vec<_>, _>>()?;
    let mut rngs: Vec<ChaCha8Rng> = (0..test.len()).map(|i| stream_rng(eval_seed, &[EVAL_TAG, i as u64])).collect();
    let mut live: Vec<usize> = (0..test.len()).collect();
    let mut solved = 0;
    for _ in 0..MAX_EPISODE_STEPS {
        if live.is_empty() {
            break;
        }
        let batch: Vec<GameState> = live.iter().map(|&i| states[i].clone()).collect();
        let probs = policy.probabilities(&live, &batch, palette)?;
        let mut still = Vec::with_capacity(live.len());
        for (&i, p) in live.iter().zip(&probs) {
            let a = match mode {
                EvalMode::Sample => sample_action(p, &mut rngs[i]),
                EvalMode::Argmax => greedy_action(p),
            };
            let (next, out) = engine::step(&states[i], Action::from_index(a).expect("4 actions"));
            states[i] = next;
            if out.solved {
                solved += 1;
            } else if !out.done {
                still.push(i);
            }
        }
        live = still;
    }
    Ok(EvalPoint {
        env_steps,
        solved_ratio: solved as f64 / test.len() as f64,
        solved,
        episodes: test.len(),
        eval_seed,
    })
}

/// Solved ratio of the network policy on `test`.
pub fn evaluate(
    params: &NetworkParams<f32>,
    test: &[Level],
    palette: PaletteId,
    mode: EvalMode,
    eval_seed: u64,
    env_steps: u64,
) -> Result<EvalPoint, EvalError> {
    evaluate_policy(&mut NetworkPolicy { params }, test, palette, mode, eval_seed, env_steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelgen::{generate, GenConstraints};
    use crate::nn::Heads;

    fn smoke_levels() -> Vec<Level> {
        generate(5, 1, 10, &GenConstraints::trivial()).unwrap().levels
    }

    #[test]
    fn oracle_agent_solves_everything() {
        let levels = generate(2, 2, 12, &GenConstraints::default()).unwrap().levels;
        let mut oracle = PlanReplayPolicy::new(&levels, planner::DEFAULT_NODE_BUDGET).unwrap();
        for mode in [EvalMode::Sample, EvalMode::Argmax] {
            let p = evaluate_policy(&mut oracle, &levels, PaletteId::Base, mode, 1, 0).unwrap();
            assert_eq!(p.solved_ratio, 1.0);
            assert_eq!(p.solved, 12);
        }
    }

    #[test]
    fn same_seed_same_point() {
        let levels = smoke_levels();
        let params = NetworkParams::<f32>::init(Heads::ActorCritic, 3);
        let a = evaluate(&params, &levels, PaletteId::Base, EvalMode::Sample, 11, 1000).unwrap();
        let b = evaluate(&params, &levels, PaletteId::Base, EvalMode::Sample, 11, 1000).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.solved_ratio));
        assert_eq!(a.solved_ratio, a.solved as f64 / 10.0);
    }

    #[test]
    fn sampling_follows_the_distribution() {
        let mut rng = stream_rng(0, &[]);
        let mut counts = [0usize; 4];
        for _ in 0..40_000 {
            counts[sample_action(&[0.1, 0.2, 0.3, 0.4], &mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip([0.1, 0.2, 0.3, 0.4]) {
            assert!((*c as f64 / 40_000.0 - p).abs() < 0.01);
        }
        assert_eq!(sample_action(&[0.0, 1.0, 0.0, 0.0], &mut rng), 1);
        assert_eq!(greedy_action(&[0.3, 0.3, 0.2, 0.2]), 0);
    }

    #[test]
    fn empty_test_set_is_an_error() {
        assert!(matches!(
            evaluate_policy(&mut UniformPolicy, &[], PaletteId::Base, EvalMode::Sample, 0, 0),
            Err(EvalError::EmptyTestSet)
        ));
    }
}
