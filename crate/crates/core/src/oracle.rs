//! Slow, independent reference implementations used to check the fast paths:
//! a direct convolution forward pass, unpruned searches driven by the engine's
//! own step function, reward bookkeeping from box movements, and central
//! finite differences.

use crate::engine::{self, Action, Cell, GameState, Level, Reward};
use crate::nn::{
    a2c_loss, a2c_objective, architecture, cross_entropy_loss, forward_train, log_softmax_rows, A2cBatch, Gradients, Heads, LayerKind, LossCoefs,
    NetworkParams, NnError,
};
use crate::seeding::stream_rng;
use rand::Rng;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Logits and value of one observation by explicit loops over every
/// output, channel and kernel tap.
pub fn naive_forward(params: &NetworkParams<f64>, observation: &[f32]) -> (Vec<f64>, Option<f64>) {
    let mut act: Vec<f64> = observation.iter().map(|&x| x as f64).collect();
    let mut size = crate::engine::OBS_SIZE;
    let arch = architecture(params.heads);
    let mut hidden = Vec::new();
    for (spec, layer) in arch.iter().zip(&params.layers) {
        match spec.kind {
            LayerKind::Conv(g) => {
                let out = g.out_size();
                let mut next = vec![0.0; g.out_channels * out * out];
                for o in 0..g.out_channels {
                    for y in 0..out {
                        for x in 0..out {
                            let mut s = layer.bias[o];
                            for c in 0..g.in_channels {
                                for ky in 0..g.kernel {
                                    for kx in 0..g.kernel {
                                        let w = layer.weight[((o * g.in_channels + c) * g.kernel + ky) * g.kernel + kx];
                                        s += w * act[(c * size + y * g.stride + ky) * size + x * g.stride + kx];
                                    }
                                }
                            }
                            next[(o * out + y) * out + x] = s.max(0.0);
                        }
                    }
                }
                act = next;
                size = out;
            }
            LayerKind::Dense { inputs, outputs } => {
                let input = if spec.name == "fc" { &act } else { &hidden };
                let mut out = vec![0.0; outputs];
                for (j, o) in out.iter_mut().enumerate() {
                    *o = layer.bias[j] + (0..inputs).map(|i| layer.weight[j * inputs + i] * input[i]).sum::<f64>();
                }
                if spec.name == "fc" {
                    hidden = out.into_iter().map(|v| v.max(0.0)).collect();
                } else if spec.name == "value" {
                    return (std::mem::take(&mut act), Some(out[0]));
                } else {
                    act = out;
                }
            }
        }
    }
    (act, None)
}

/// Shortest solution length by plain BFS over states produced by
/// [`engine::step`], without any pruning. `None` if no solution exists within
/// `budget` distinct states.
pub fn unpruned_bfs_length(level: &Level, budget: usize) -> Option<u32> {
    let start = engine::reset(level).ok()?;
    let key = |s: &GameState| (s.player(), s.boxes().to_vec());
    let mut seen: FxHashSet<(Cell, Vec<Cell>)> = FxHashSet::default();
    seen.insert(key(&start));
    let mut queue = VecDeque::from([(start, 0u32)]);
    while let Some((s, d)) = queue.pop_front() {
        // rebase the step counter so the episode cap never interferes
        let s = GameState::from_parts(*s.board(), s.boxes().to_vec(), s.player(), 0);
        for a in Action::ALL {
            let (n, out) = engine::step(&s, a);
            if out.solved {
                return Some(d + 1);
            }
            if seen.insert(key(&n)) {
                if seen.len() > budget {
                    return None;
                }
                queue.push_back((n, d + 1));
            }
        }
    }
    None
}

/// Shortest solution length by iterative deepening from the start state, with a
/// table of the largest remaining depth already explored from each state.
pub fn iddfs_length(level: &Level, max_depth: u32) -> Option<u32> {
    fn dfs(s: &GameState, left: u32, memo: &mut FxHashMap<(Cell, Vec<Cell>), u32>) -> bool {
        if left == 0 {
            return false;
        }
        let k = (s.player(), s.boxes().to_vec());
        if memo.get(&k).is_some_and(|&d| d >= left) {
            return false;
        }
        memo.insert(k, left);
        let s = GameState::from_parts(*s.board(), s.boxes().to_vec(), s.player(), 0);
        Action::ALL.iter().any(|&a| {
            let (n, out) = engine::step(&s, a);
            out.solved || dfs(&n, left - 1, memo)
        })
    }
    let start = engine::reset(level).ok()?;
    (1..=max_depth).find(|&d| dfs(&start, d, &mut FxHashMap::default()))
}

/// Event counts of an episode, taken from box positions alone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeEvents {
    pub steps: u32,
    pub pushes_on: u32,
    pub pushes_off: u32,
    pub solved: bool,
}

impl EpisodeEvents {
    /// `10 * solved + on - off - 0.1 * steps`, in tenths.
    pub fn expected_return(&self) -> Reward {
        Reward(100 * self.solved as i32 + 10 * self.pushes_on as i32 - 10 * self.pushes_off as i32 - self.steps as i32)
    }
}

/// Plays `actions` until the episode ends; returns the summed rewards and the
/// independently counted events.
pub fn replay_events(level: &Level, actions: &[Action]) -> Result<(Reward, EpisodeEvents), crate::engine::LevelError> {
    let mut s = engine::reset(level)?;
    let mut ev = EpisodeEvents::default();
    let mut total = Reward::default();
    for &a in actions {
        let (n, out) = engine::step(&s, a);
        total = total + out.reward;
        ev.steps += 1;
        let gone: Vec<Cell> = s.boxes().iter().copied().filter(|b| !n.has_box(*b)).collect();
        let came: Vec<Cell> = n.boxes().iter().copied().filter(|b| !s.has_box(*b)).collect();
        assert!(gone.len() == came.len() && gone.len() <= 1, "at most one box moves per step");
        if let (Some(&from), Some(&to)) = (gone.first(), came.first()) {
            let b = s.board();
            ev.pushes_on += (!b.is_target(from) && b.is_target(to)) as u32;
            ev.pushes_off += (b.is_target(from) && !b.is_target(to)) as u32;
        }
        ev.solved = n.boxes().iter().all(|&c| n.board().is_target(c));
        s = n;
        if out.done {
            break;
        }
    }
    Ok((total, ev))
}

/// Result of a finite-difference probe of one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerCheck {
    pub layer: String,
    pub checked: usize,
    /// Coordinates whose perturbation crossed a ReLU kink.
    pub skipped: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Relative errors use `max(|analytic|, |numeric|, floor * max(1, |loss|))` as denominator,
    /// which keeps round-off on near-zero gradients from dominating.
    pub floor: f64,
    pub coords_per_layer: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            floor: 1e-5,
            coords_per_layer: 24,
            seed: 0,
        }
    }
}

/// Which objective is being differentiated.
pub enum Objective<'a> {
    A2c { batch: A2cBatch<'a>, coefs: LossCoefs },
    CrossEntropy { observations: &'a [f32], labels: &'a [usize] },
}

fn objective_and_grads(params: &NetworkParams<f64>, obj: &Objective<'_>) -> Result<(Gradients<f64>, Option<Vec<f64>>), NnError> {
    match obj {
        Objective::A2c { batch, coefs } => {
            let (_, g) = a2c_loss(params, batch, coefs)?;
            let (out, _) = forward_train(params, batch.observations)?;
            let v = out.values.expect("actor-critic");
            let adv = batch.returns.iter().zip(&v).map(|(&r, &v)| r as f64 - v).collect();
            Ok((g, Some(adv)))
        }
        Objective::CrossEntropy { observations, labels } => Ok((cross_entropy_loss(params, observations, labels)?.2, None)),
    }
}

fn objective_value(params: &NetworkParams<f64>, obj: &Objective<'_>, adv: Option<&[f64]>) -> Result<(f64, Vec<bool>), NnError> {
    match obj {
        Objective::A2c { batch, coefs } => {
            let (out, cache) = forward_train(params, batch.observations)?;
            Ok((a2c_objective(&out, batch, coefs, adv)?.loss, cache.relu_pattern()))
        }
        Objective::CrossEntropy { observations, labels } => {
            let (out, cache) = forward_train(params, observations)?;
            let lp = log_softmax_rows(&out.logits, out.logit_count);
            let n = labels.len();
            let loss = -labels.iter().enumerate().map(|(i, &l)| lp[i * out.logit_count + l]).sum::<f64>() / n as f64;
            Ok((loss, cache.relu_pattern()))
        }
    }
}

/// Parameter `i` of layer `li`, weights first then biases.
fn coord(p: &mut NetworkParams<f64>, li: usize, i: usize) -> &mut f64 {
    let l = &mut p.layers[li];
    let nw = l.weight.len();
    if i < nw {
        &mut l.weight[i]
    } else {
        &mut l.bias[i - nw]
    }
}

/// Compares analytic gradients with central differences on sampled coordinates
/// of every trainable layer (always including each layer's largest-gradient
/// coordinate). The advantage in the policy term is held at its unperturbed value.
pub fn gradient_check(params: &NetworkParams<f64>, obj: &Objective<'_>, cfg: &GradCheckConfig) -> Result<Vec<LayerCheck>, NnError> {
    let (grads, adv) = objective_and_grads(params, obj)?;
    let (base_value, base_pattern) = objective_value(params, obj, adv.as_deref())?;
    let floor = cfg.floor * base_value.abs().max(1.0);
    let mut rng = stream_rng(cfg.seed, &[0x6764]);
    let mut p = params.clone();
    let mut report = Vec::new();
    for (li, g) in grads.layers.iter().enumerate() {
        let Some(g) = g else { continue };
        let nw = g.weight.len();
        let total = nw + g.bias.len();
        let grad_at = |i: usize| if i < nw { g.weight[i] } else { g.bias[i - nw] };
        let mut coords: Vec<usize> = (0..cfg.coords_per_layer).map(|_| rng.random_range(0..total)).collect();
        coords.push((0..total).max_by(|&a, &b| grad_at(a).abs().total_cmp(&grad_at(b).abs())).unwrap_or(0));
        coords.push(nw + rng.random_range(0..g.bias.len()));
        let mut check = LayerCheck {
            layer: params.layers[li].name.clone(),
            checked: 0,
            skipped: 0,
            max_rel_err: 0.0,
        };
        for &i in &coords {
            let orig = *coord(&mut p, li, i);
            *coord(&mut p, li, i) = orig + cfg.step;
            let (fp, pat_p) = objective_value(&p, obj, adv.as_deref())?;
            *coord(&mut p, li, i) = orig - cfg.step;
            let (fm, pat_m) = objective_value(&p, obj, adv.as_deref())?;
            *coord(&mut p, li, i) = orig;
            if pat_p != base_pattern || pat_m != base_pattern {
                check.skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * cfg.step);
            let analytic = grad_at(i);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
            check.max_rel_err = check.max_rel_err.max(rel);
            check.checked += 1;
        }
        report.push(check);
    }
    Ok(report)
}

/// Helper for the gradient check: a few rendered states with varied targets.
pub fn check_batch(levels: &[Level], n: usize, seed: u64) -> (Vec<f32>, Vec<usize>, Vec<f32>) {
    let mut rng = stream_rng(seed, &[0x6362]);
    let mut obs = Vec::new();
    let mut actions = Vec::new();
    let mut returns = Vec::new();
    for i in 0..n {
        let mut s = engine::reset(&levels[i % levels.len()]).expect("valid level");
        for _ in 0..rng.random_range(0..6) {
            if s.is_terminal() {
                break;
            }
            s = engine::step(&s, Action::ALL[rng.random_range(0..4)]).0;
        }
        obs.extend_from_slice(engine::render(&s, engine::PaletteId::Base).pixels());
        actions.push(rng.random_range(0..4));
        returns.push(rng.random_range(-2.0..5.0));
    }
    (obs, actions, returns)
}

/// `true` when `heads` produce every layer kind the checks cover.
pub fn covers_all_layer_kinds(heads: Heads) -> bool {
    let arch = architecture(heads);
    arch.iter().any(|s| matches!(s.kind, LayerKind::Conv(_))) && arch.iter().any(|s| matches!(s.kind, LayerKind::Dense { .. }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::parse_levels;
    use crate::levelgen::{generate, GenConstraints};
    use crate::nn::forward;
    use crate::planner;

    #[test]
    fn fast_forward_matches_direct_loops() {
        let levels = generate(3, 2, 3, &GenConstraints::default()).unwrap().levels;
        let (obs, _, _) = check_batch(&levels, 3, 1);
        let p32 = NetworkParams::<f32>::init(Heads::ActorCritic, 17);
        let p64: NetworkParams<f64> = p32.cast();
        let fast = forward(&p32, &obs).unwrap();
        for i in 0..3 {
            let (logits, v) = naive_forward(&p64, &obs[i * crate::engine::OBS_LEN..(i + 1) * crate::engine::OBS_LEN]);
            for (a, b) in fast.logits_row(i).iter().zip(&logits) {
                assert!((*a as f64 - b).abs() <= 1e-5 * b.abs().max(1e-2), "{a} vs {b}");
            }
            let fv = fast.values.as_ref().unwrap()[i] as f64;
            assert!((fv - v.unwrap()).abs() <= 1e-5 * v.unwrap().abs().max(1e-2));
        }
    }

    #[test]
    fn searches_agree_on_one_box_levels() {
        let levels = generate(11, 1, 8, &GenConstraints::default()).unwrap().levels;
        for l in &levels {
            let bfs = planner::solve_optimal(l, planner::DEFAULT_NODE_BUDGET).unwrap().len() as u32;
            assert_eq!(unpruned_bfs_length(l, 1_000_000), Some(bfs), "{}", l.id);
            assert_eq!(iddfs_length(l, 60), Some(bfs), "{}", l.id);
        }
    }

    #[test]
    fn corridor_events() {
        let l = parse_levels("; c\n##########\n#        #\n#@ $ .   #\n#        #\n#        #\n#        #\n#        #\n#        #\n#        #\n##########\n")
            .unwrap()
            .remove(0);
        let (r, ev) = replay_events(&l, &[Action::Right, Action::Right, Action::Right]).unwrap();
        assert_eq!(r, Reward(107));
        assert_eq!(ev.expected_return(), r);
        assert!(ev.solved && ev.pushes_on == 1);
    }

    #[test]
    fn a2c_and_locator_gradients_match_differences() {
        let levels = generate(3, 2, 3, &GenConstraints::default()).unwrap().levels;
        let (obs, actions, returns) = check_batch(&levels, 6, 2);
        let p: NetworkParams<f64> = NetworkParams::<f32>::init(Heads::ActorCritic, 5).cast();
        let obj = Objective::A2c {
            batch: A2cBatch {
                observations: &obs,
                actions: &actions,
                returns: &returns,
            },
            coefs: LossCoefs::default(),
        };
        let cfg = GradCheckConfig {
            coords_per_layer: 6,
            ..Default::default()
        };
        let report = gradient_check(&p, &obj, &cfg).unwrap();
        assert_eq!(report.len(), 6);
        for c in &report {
            assert!(c.checked > 0 && c.max_rel_err < 1e-5, "{c:?}");
        }
        let labels = [11, 12, 23, 45, 56, 88];
        let loc: NetworkParams<f64> = NetworkParams::<f32>::init(Heads::Locator, 5).cast();
        let obj = Objective::CrossEntropy {
            observations: &obs,
            labels: &labels,
        };
        for c in gradient_check(&loc, &obj, &cfg).unwrap() {
            assert!(c.checked > 0 && c.max_rel_err < 1e-5, "{c:?}");
        }
    }
}
