//! The invariant suite behind the `verify` command. Each check returns a
//! pass/fail record with a one-line detail string.

use crate::engine::{Action, Level, PaletteId};
use crate::experiment::{format_experiment, parse_experiment, REGISTRY};
use crate::levelgen::{generate, sample_candidate, GenConstraints};
use crate::nn::{a2c_loss, read_checkpoint, write_checkpoint, A2cBatch, Checkpoint, Heads, LossCoefs, NetworkParams, RmsProp, RmsPropConfig};
use crate::oracle::{self, GradCheckConfig, Objective};
use crate::planner::{self, LengthHistogram, DEFAULT_NODE_BUDGET};
use crate::seeding::stream_rng;
use crate::trainer::n_step_returns;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

pub const PARAM_COUNT: usize = 1_684_645;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(name: &str, f: impl FnOnce() -> Result<String, String>) -> CheckResult {
    let t = Instant::now();
    let r = f();
    CheckResult {
        name: name.into(),
        passed: r.is_ok(),
        detail: r.unwrap_or_else(|e| e),
        seconds: t.elapsed().as_secs_f64(),
    }
}

/// `sequences` random action sequences, each on a fresh random 1-3 box layout;
/// every episode's reward sum must equal the event-count identity exactly.
pub fn check_reward_decomposition(sequences: usize, seed: u64) -> CheckResult {
    timed("engine.reward_decomposition", || {
        let mut rng = stream_rng(seed, &[0x7264]);
        let mut next_index = 0u64;
        let mut solved = 0;
        for i in 0..sequences {
            let boxes = 1 + i % 3;
            let level = loop {
                next_index += 1;
                if let Some(l) = sample_candidate(seed, boxes, next_index, 0.15) {
                    break l;
                }
            };
            let len = rng.random_range(1..=130);
            let actions: Vec<Action> = (0..len).map(|_| Action::ALL[rng.random_range(0..4)]).collect();
            let (total, ev) = oracle::replay_events(&level, &actions).map_err(|e| e.to_string())?;
            if total != ev.expected_return() {
                return Err(format!("sequence {i} on {}: sum {total:?}, identity {:?}", level.id, ev.expected_return()));
            }
            solved += ev.solved as usize;
        }
        Ok(format!("{sequences} sequences exact ({solved} solved)"))
    })
}

/// Generator/solver agreement: every level solvable with a replayable plan,
/// pruned lengths equal to unpruned BFS on a sample, medians increasing in box count.
pub fn check_generator_solver(per_count: usize, oracle_samples: usize, seed: u64) -> CheckResult {
    timed("planner.generator_oracle", || {
        let mut medians = Vec::new();
        let mut compared = 0;
        for n in 1..=3 {
            let set = generate(seed, n, per_count, &GenConstraints::default()).map_err(|e| e.to_string())?;
            let mut lengths = Vec::new();
            for (i, l) in set.levels.iter().enumerate() {
                let plan = planner::solve_optimal(l, DEFAULT_NODE_BUDGET).map_err(|e| format!("{}: {e}", l.id))?;
                if !planner::replay_solves(l, &plan) || Some(plan.len() as u32) != l.optimal_length {
                    return Err(format!("{}: plan does not replay or length disagrees", l.id));
                }
                lengths.push(plan.len() as u32);
                // spread the oracle comparisons evenly over the three sets
                if i < oracle_samples.div_ceil(3) && compared < oracle_samples {
                    let brute = oracle::unpruned_bfs_length(l, 20_000_000);
                    if brute != Some(plan.len() as u32) {
                        return Err(format!("{}: pruned {} vs unpruned {brute:?}", l.id, plan.len()));
                    }
                    compared += 1;
                }
            }
            medians.push(LengthHistogram::from_lengths(lengths).stats().expect("nonempty").median);
        }
        if !(medians[0] < medians[1] && medians[1] < medians[2]) {
            return Err(format!("medians not increasing: {medians:?}"));
        }
        Ok(format!(
            "{} levels solved and replayed, {compared} oracle matches, medians {medians:?}",
            3 * per_count
        ))
    })
}

pub fn check_param_count() -> CheckResult {
    timed("nn.param_count", || {
        let n = NetworkParams::<f32>::init(Heads::ActorCritic, 0).param_count();
        if n == PARAM_COUNT {
            Ok(format!("{n}"))
        } else {
            Err(format!("{n} != {PARAM_COUNT}"))
        }
    })
}

fn sample_levels(seed: u64) -> Result<Vec<Level>, String> {
    Ok(generate(seed, 2, 6, &GenConstraints::default()).map_err(|e| e.to_string())?.levels)
}

/// Fast forward pass against the direct-loop oracle, relative tolerance 1e-5.
pub fn check_forward_oracle(seed: u64) -> CheckResult {
    timed("nn.forward_oracle", || {
        let levels = sample_levels(seed)?;
        let (obs, _, _) = oracle::check_batch(&levels, 2, seed);
        let p32 = NetworkParams::<f32>::init(Heads::ActorCritic, seed);
        let p64: NetworkParams<f64> = p32.cast();
        let fast = crate::nn::forward(&p64, &obs).map_err(|e| e.to_string())?;
        let mut worst = 0f64;
        for i in 0..2 {
            let (logits, v) = oracle::naive_forward(&p64, &obs[i * crate::engine::OBS_LEN..(i + 1) * crate::engine::OBS_LEN]);
            let fv = fast.values.as_ref().expect("values")[i];
            for (a, b) in fast.logits_row(i).iter().chain([&fv]).zip(logits.iter().chain([&v.expect("value")])) {
                worst = worst.max((a - b).abs() / b.abs().max(1e-12));
            }
        }
        if worst < 1e-5 {
            Ok(format!("max relative difference {worst:.2e}"))
        } else {
            Err(format!("max relative difference {worst:.2e}"))
        }
    })
}

/// Central differences in double precision on a 6-sample batch for both head
/// configurations; every layer must stay below relative error 1e-5.
pub fn check_gradients(coords_per_layer: usize, seed: u64) -> CheckResult {
    timed("nn.gradient_check", || {
        let levels = sample_levels(seed)?;
        let (obs, actions, returns) = oracle::check_batch(&levels, 6, seed);
        let cfg = GradCheckConfig {
            coords_per_layer,
            seed,
            ..Default::default()
        };
        let ac: NetworkParams<f64> = NetworkParams::<f32>::init(Heads::ActorCritic, seed).cast();
        let a2c = Objective::A2c {
            batch: A2cBatch {
                observations: &obs,
                actions: &actions,
                returns: &returns,
            },
            coefs: LossCoefs::default(),
        };
        let labels: Vec<usize> = (0..6).map(|i| 11 + 13 * i).collect();
        let loc: NetworkParams<f64> = NetworkParams::<f32>::init(Heads::Locator, seed).cast();
        let ce = Objective::CrossEntropy {
            observations: &obs,
            labels: &labels,
        };
        let mut report = oracle::gradient_check(&ac, &a2c, &cfg).map_err(|e| e.to_string())?;
        report.extend(oracle::gradient_check(&loc, &ce, &cfg).map_err(|e| e.to_string())?);
        let worst = report.iter().map(|c| c.max_rel_err).fold(0.0, f64::max);
        let checked: usize = report.iter().map(|c| c.checked).sum();
        let skipped: usize = report.iter().map(|c| c.skipped).sum();
        let detail = format!(
            "{} layers, {checked} coordinates ({skipped} kink skips), max relative error {worst:.2e}: {}",
            report.len(),
            report
                .iter()
                .map(|c| format!("{}={:.1e}", c.layer, c.max_rel_err))
                .collect::<Vec<_>>()
                .join(" ")
        );
        if worst < 1e-5 && report.iter().all(|c| c.checked > 0) {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

/// Frozen layers stay bit-identical across optimizer steps on real gradients.
pub fn check_freeze_invariance(steps: usize, seed: u64) -> CheckResult {
    timed("nn.freeze_invariance", || {
        let levels = sample_levels(seed)?;
        let (obs, actions, returns) = oracle::check_batch(&levels, 6, seed);
        let batch = A2cBatch {
            observations: &obs,
            actions: &actions,
            returns: &returns,
        };
        for frozen in [vec![0], vec![0, 1], vec![0, 1, 2], vec![3, 4, 5]] {
            let mut p = NetworkParams::<f32>::init(Heads::ActorCritic, seed);
            for &i in &frozen {
                p.freeze_mask[i] = true;
            }
            let before = p.clone();
            let mut opt = RmsProp::new(RmsPropConfig::default(), &p);
            for _ in 0..steps {
                let (_, g) = a2c_loss(&p, &batch, &LossCoefs::default()).map_err(|e| e.to_string())?;
                opt.step(&mut p, &g).map_err(|e| e.to_string())?;
            }
            for i in 0..p.layers.len() {
                let same = p.layers[i] == before.layers[i];
                if same != frozen.contains(&i) {
                    return Err(format!("layer {} frozen={} changed={}", p.layers[i].name, frozen.contains(&i), !same));
                }
            }
        }
        Ok(format!("4 freeze masks, {steps} steps each"))
    })
}

pub fn check_checkpoint_round_trip(seed: u64) -> CheckResult {
    timed("nn.checkpoint_round_trip", || {
        let mut params = NetworkParams::<f32>::init(Heads::ActorCritic, seed);
        params.freeze_mask[1] = true;
        let c = Checkpoint {
            params,
            source_task: Some("1box".into()),
            env_steps: 123_450,
        };
        let mut a = Vec::new();
        write_checkpoint(&c, &mut a).map_err(|e| e.to_string())?;
        let back = read_checkpoint(a.as_slice()).map_err(|e| e.to_string())?;
        let mut b = Vec::new();
        write_checkpoint(&back, &mut b).map_err(|e| e.to_string())?;
        if back == c && a == b {
            Ok(format!("{} bytes bit-exact", a.len()))
        } else {
            Err("round trip changed the checkpoint".into())
        }
    })
}

/// Direct discounted sum up to the first terminal, plus the discounted bootstrap.
pub fn direct_returns(rewards: &[f64], dones: &[bool], bootstrap: f64, gamma: f64) -> Vec<f64> {
    (0..rewards.len())
        .map(|t| {
            let mut total = 0.0;
            let mut discount = 1.0;
            let mut cut = false;
            for j in t..rewards.len() {
                total += discount * rewards[j];
                if dones[j] {
                    cut = true;
                    break;
                }
                discount *= gamma;
            }
            if !cut {
                total += discount * bootstrap;
            }
            total
        })
        .collect()
}

pub fn check_returns(cases: usize, seed: u64) -> CheckResult {
    timed("trainer.n_step_returns", || {
        let mut rng = stream_rng(seed, &[0x7274]);
        let values = [-1.1, -0.1, 0.9, 10.9];
        for i in 0..cases {
            let r: Vec<f64> = (0..5).map(|_| values[rng.random_range(0..4)]).collect();
            let d: Vec<bool> = (0..5).map(|_| rng.random_bool(0.2)).collect();
            let v = rng.random_range(-3.0..3.0);
            let a = n_step_returns(&r, &d, v, 0.99);
            let b = direct_returns(&r, &d, v, 0.99);
            if a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-12) {
                return Err(format!("case {i}: {a:?} vs {b:?}"));
            }
        }
        Ok(format!("{cases} random rollouts"))
    })
}

pub fn check_registry() -> CheckResult {
    timed("experiment.registry_round_trip", || {
        for name in REGISTRY {
            let id = parse_experiment(name).map_err(|e| e.to_string())?;
            let back = format_experiment(&id).map_err(|e| e.to_string())?;
            if back != name {
                return Err(format!("{name} -> {back}"));
            }
        }
        Ok(format!("{} entries", REGISTRY.len()))
    })
}

/// Render purity and palette separation on generated states.
pub fn check_render(seed: u64) -> CheckResult {
    timed("engine.render", || {
        let levels = sample_levels(seed)?;
        for l in &levels {
            let s = crate::engine::reset(l).map_err(|e| e.to_string())?;
            let a = crate::engine::render(&s, PaletteId::Base);
            if a != crate::engine::render(&s.clone(), PaletteId::Base) || a == crate::engine::render(&s, PaletteId::Game2) {
                return Err(format!("{}: render not pure or palettes equal", l.id));
            }
        }
        Ok(format!("{} states", levels.len()))
    })
}

/// Runs the whole suite. `quick` shrinks sample counts for interactive use.
pub fn run_verify(quick: bool, seed: u64) -> Vec<CheckResult> {
    let (seqs, per, oracles, coords) = if quick { (1_000, 20, 6, 8) } else { (10_000, 100, 50, 24) };
    vec![
        check_reward_decomposition(seqs, seed),
        check_render(seed),
        check_generator_solver(per, oracles, seed),
        check_param_count(),
        check_forward_oracle(seed),
        check_gradients(coords, seed),
        check_freeze_invariance(5, seed),
        check_checkpoint_round_trip(seed),
        check_returns(1_000, seed),
        check_registry(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        for c in run_verify(true, 1) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn direct_returns_agree_with_hand_sum() {
        let r = direct_returns(&[-0.1; 5], &[false; 5], 0.0, 0.99);
        assert!((r[0] + 0.490099501).abs() < 1e-12);
    }
}
