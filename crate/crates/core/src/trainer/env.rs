use crate::engine::{self, render, Action, GameState, Level, LevelError, PaletteId, Reward, StepOutcome, OBS_LEN};
use crate::seeding::stream_rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const SLOT_TAG: u64 = 0x736c_6f74;

/// Summary of one finished training episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub slot: usize,
    pub level: usize,
    pub episode_return: Reward,
    pub solved: bool,
    pub steps: u32,
}

struct Slot {
    rng: ChaCha8Rng,
    level: usize,
    state: GameState,
    episode_return: Reward,
}

/// Parallel episode slots over a fixed training set. A finished episode is
/// replaced at once by a fresh one on a level drawn uniformly with replacement
/// from the slot's own stream.
pub struct VectorEnv<'a> {
    levels: &'a [Level],
    palette: PaletteId,
    parallel: bool,
    slots: Vec<Slot>,
    finished: Vec<EpisodeRecord>,
}

impl<'a> VectorEnv<'a> {
    /// Slot `i` draws levels and actions from stream `(seed, i)`.
    pub fn new(levels: &'a [Level], num_envs: usize, seed: u64, palette: PaletteId) -> Result<Self, LevelError> {
        for l in levels {
            engine::reset(l)?;
        }
        assert!(!levels.is_empty() && num_envs > 0, "vector env needs levels and slots");
        let slots = (0..num_envs)
            .map(|i| {
                let mut rng = stream_rng(seed, &[SLOT_TAG, i as u64]);
                let level = rng.random_range(0..levels.len());
                Slot {
                    rng,
                    level,
                    state: engine::reset(&levels[level]).expect("checked above"),
                    episode_return: Reward::default(),
                }
            })
            .collect();
        Ok(VectorEnv {
            levels,
            palette,
            parallel: false,
            slots,
            finished: Vec::new(),
        })
    }

    /// Renders and steps slots on the rayon pool. Each slot owns its stream, so
    /// results match the sequential order.
    pub fn set_parallel(&mut self, parallel: bool) {
        self.parallel = parallel;
    }

    pub fn num_envs(&self) -> usize {
        self.slots.len()
    }

    pub fn states(&self) -> impl Iterator<Item = &GameState> {
        self.slots.iter().map(|s| &s.state)
    }

    /// Current observations, slot-major.
    pub fn observations(&self) -> Vec<f32> {
        let mut obs = vec![0f32; self.slots.len() * OBS_LEN];
        let fill = |(chunk, slot): (&mut [f32], &Slot)| chunk.copy_from_slice(render(&slot.state, self.palette).pixels());
        if self.parallel {
            obs.par_chunks_mut(OBS_LEN).zip(self.slots.par_iter()).for_each(fill);
        } else {
            obs.chunks_mut(OBS_LEN).zip(self.slots.iter()).for_each(fill);
        }
        obs
    }

    /// Draws one action per slot from `probs` (one row of 4 per slot).
    pub fn sample_actions(&mut self, probs: &[f64]) -> Vec<usize> {
        self.slots
            .iter_mut()
            .zip(probs.chunks(Action::COUNT))
            .map(|(s, p)| crate::eval::sample_action(p, &mut s.rng))
            .collect()
    }

    /// Steps every slot; finished episodes are recorded and reset.
    pub fn step(&mut self, actions: &[usize]) -> Vec<StepOutcome> {
        assert_eq!(actions.len(), self.slots.len(), "one action per slot");
        let levels = self.levels;
        let advance = |(slot, &a): (&mut Slot, &usize)| {
            let (next, out) = engine::step(&slot.state, Action::from_index(a).expect("action index"));
            slot.episode_return = slot.episode_return + out.reward;
            let record = out.done.then(|| {
                let r = (slot.level, slot.episode_return, out.solved, next.steps_taken());
                slot.level = slot.rng.random_range(0..levels.len());
                slot.state = engine::reset(&levels[slot.level]).expect("validated level");
                slot.episode_return = Reward::default();
                r
            });
            if record.is_none() {
                slot.state = next;
            }
            (out, record)
        };
        let results: Vec<_> = if self.parallel {
            self.slots.par_iter_mut().zip(actions.par_iter()).map(advance).collect()
        } else {
            self.slots.iter_mut().zip(actions.iter()).map(advance).collect()
        };
        results
            .into_iter()
            .enumerate()
            .map(|(slot, (out, rec))| {
                if let Some((level, episode_return, solved, steps)) = rec {
                    self.finished.push(EpisodeRecord {
                        slot,
                        level,
                        episode_return,
                        solved,
                        steps,
                    });
                }
                out
            })
            .collect()
    }

    /// Episodes finished since the last call.
    pub fn drain_finished(&mut self) -> Vec<EpisodeRecord> {
        std::mem::take(&mut self.finished)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelgen::{generate, GenConstraints};

    #[test]
    fn finished_episodes_reset_immediately() {
        let set = generate(1, 1, 5, &GenConstraints::trivial()).unwrap();
        let mut env = VectorEnv::new(&set.levels, 4, 9, PaletteId::Base).unwrap();
        let mut rng = stream_rng(0, &[]);
        for _ in 0..400 {
            let actions: Vec<usize> = (0..4).map(|_| rng.random_range(0..4)).collect();
            let before: Vec<GameState> = env.states().cloned().collect();
            let outs = env.step(&actions);
            for ((o, b), a) in outs.iter().zip(&before).zip(env.states()) {
                if o.done {
                    assert_eq!(a.steps_taken(), 0, "auto-reset");
                } else {
                    assert_eq!(a.steps_taken(), b.steps_taken() + 1);
                }
            }
        }
        let fin = env.drain_finished();
        assert!(!fin.is_empty());
        assert!(env.drain_finished().is_empty());
    }

    #[test]
    fn parallel_stepping_matches_sequential() {
        let set = generate(1, 1, 5, &GenConstraints::trivial()).unwrap();
        let mut a = VectorEnv::new(&set.levels, 6, 3, PaletteId::Base).unwrap();
        let mut b = VectorEnv::new(&set.levels, 6, 3, PaletteId::Base).unwrap();
        b.set_parallel(true);
        for t in 0..300 {
            let acts: Vec<usize> = (0..6).map(|i| (i + t) % 4).collect();
            assert_eq!(a.step(&acts), b.step(&acts));
        }
        assert_eq!(a.observations(), b.observations());
        assert_eq!(a.drain_finished(), b.drain_finished());
    }
}
