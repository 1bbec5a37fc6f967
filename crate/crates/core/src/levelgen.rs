//! Seeded generate-and-filter level generation.
//!
//! Candidate `i` draws from its own RNG stream derived from `(seed, box_count, i)`,
//! so results do not depend on how candidates are scheduled; accepted levels
//! are kept in candidate order.

use crate::engine::{format_levels, parse_levels, Board, Cell, Level, LevelError, Tile, BOARD_SIZE, CELL_COUNT};
use crate::planner::{self, PlanError, SearchLimits};
use crate::seeding::stream_rng;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("box count {0} outside 1..=3")]
    BoxCount(usize),
    #[error("requested zero levels")]
    EmptyRequest,
    #[error("candidate budget of {tried} exhausted with {produced} of {requested} levels accepted")]
    BudgetExhausted { tried: usize, produced: usize, requested: usize },
    #[error("split needs {needed} levels, set has {available}")]
    Insufficient { needed: usize, available: usize },
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConstraints {
    /// Probability that an interior cell becomes a wall.
    pub wall_density: f64,
    pub min_len: u32,
    pub max_len: u32,
    pub node_budget: usize,
    /// Upper bound on candidates drawn before giving up.
    pub max_candidates: usize,
}

impl Default for GenConstraints {
    fn default() -> Self {
        GenConstraints {
            wall_density: 0.15,
            min_len: 3,
            max_len: 60,
            node_budget: planner::DEFAULT_NODE_BUDGET,
            max_candidates: 1_000_000,
        }
    }
}

impl GenConstraints {
    /// Short levels for smoke-scale training runs.
    pub fn trivial() -> Self {
        GenConstraints {
            min_len: 1,
            max_len: 5,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelSet {
    pub levels: Vec<Level>,
    pub box_count: usize,
    pub seed: u64,
    pub constraints: GenConstraints,
}

/// JSON companion of a level text file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetManifest {
    pub seed: u64,
    pub box_count: usize,
    pub count: usize,
    pub constraints: GenConstraints,
    pub ids: Vec<String>,
    pub optimal_lengths: Vec<Option<u32>>,
}

impl LevelSet {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn manifest(&self) -> SetManifest {
        SetManifest {
            seed: self.seed,
            box_count: self.box_count,
            count: self.levels.len(),
            constraints: self.constraints,
            ids: self.levels.iter().map(|l| l.id.clone()).collect(),
            optimal_lengths: self.levels.iter().map(|l| l.optimal_length).collect(),
        }
    }

    pub fn to_text(&self) -> String {
        format_levels(&self.levels)
    }

    /// Rebuilds a set from its level text and manifest, checking that the ids agree.
    pub fn from_parts(text: &str, manifest: &SetManifest) -> Result<Self, GenError> {
        let mut levels = parse_levels(text)?;
        if levels.len() != manifest.count || levels.iter().map(|l| &l.id).ne(manifest.ids.iter()) {
            return Err(GenError::Manifest("level ids do not match manifest".into()));
        }
        for (l, len) in levels.iter_mut().zip(&manifest.optimal_lengths) {
            l.optimal_length = *len;
        }
        Ok(LevelSet {
            levels,
            box_count: manifest.box_count,
            seed: manifest.seed,
            constraints: manifest.constraints,
        })
    }

    /// Writes `<stem>.txt` and `<stem>.json`; returns both paths.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(std::path::PathBuf, std::path::PathBuf), GenError> {
        std::fs::create_dir_all(dir)?;
        let txt = dir.join(format!("{stem}.txt"));
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&txt, self.to_text())?;
        let manifest = serde_json::to_string_pretty(&self.manifest()).map_err(|e| GenError::Manifest(e.to_string()))?;
        std::fs::write(&json, manifest + "\n")?;
        Ok((txt, json))
    }

    /// Loads a level text file; a sibling `.json` manifest is used when present.
    pub fn load(path: &Path) -> Result<Self, GenError> {
        let text = std::fs::read_to_string(path)?;
        let manifest_path = path.with_extension("json");
        if manifest_path.exists() {
            let raw = std::fs::read_to_string(&manifest_path)?;
            let manifest: SetManifest = serde_json::from_str(&raw).map_err(|e| GenError::Manifest(e.to_string()))?;
            return LevelSet::from_parts(&text, &manifest);
        }
        let levels = parse_levels(&text)?;
        let box_count = levels.first().map_or(0, Level::box_count);
        Ok(LevelSet {
            levels,
            box_count,
            seed: 0,
            constraints: GenConstraints::default(),
        })
    }
}

/// Interior floor cells form one 4-connected region.
pub fn floor_connected(board: &Board) -> bool {
    let floor: Vec<Cell> = (0..CELL_COUNT).map(Cell::from_index).filter(|&c| !board.is_wall(c)).collect();
    let Some(&first) = floor.first() else {
        return false;
    };
    let mut seen = [false; CELL_COUNT];
    seen[first.index()] = true;
    let mut stack = vec![first];
    let mut reached = 1;
    while let Some(c) = stack.pop() {
        for a in crate::engine::Action::ALL {
            if let Some(n) = c.neighbor(a) {
                if !board.is_wall(n) && !seen[n.index()] {
                    seen[n.index()] = true;
                    reached += 1;
                    stack.push(n);
                }
            }
        }
    }
    reached == floor.len()
}

/// Draws candidate `index` of the `(seed, box_count)` stream. Returns `None` when the
/// sampled layout is rejected before search (disconnected, cramped, or a box on a dead square).
pub fn sample_candidate(seed: u64, box_count: usize, index: u64, wall_density: f64) -> Option<Level> {
    let mut rng = stream_rng(seed, &[0x6c65_7665_6c67_656e, box_count as u64, index]);
    let mut board = Board::open();
    for r in 1..BOARD_SIZE - 1 {
        for c in 1..BOARD_SIZE - 1 {
            if rng.random_bool(wall_density) {
                board.set(Cell::new(r, c), Tile::Wall);
            }
        }
    }
    if !floor_connected(&board) {
        return None;
    }
    let mut floor: Vec<Cell> = (0..CELL_COUNT).map(Cell::from_index).filter(|&c| !board.is_wall(c)).collect();
    if floor.len() < 2 * box_count + 1 {
        return None;
    }
    floor.shuffle(&mut rng);
    let targets = &floor[..box_count];
    for &t in targets {
        board.set(t, Tile::Target);
    }
    let rest = &floor[box_count..];
    let boxes: Vec<Cell> = rest[..box_count].to_vec();
    let player = *rest[box_count..].choose(&mut rng)?;
    let dead = planner::dead_squares(&board);
    if boxes.iter().any(|b| dead[b.index()]) {
        return None;
    }
    let id = format!("b{box_count}-s{seed}-c{index:07}");
    Some(Level::new(id, board, boxes, player))
}

fn evaluate_candidate(seed: u64, box_count: usize, index: u64, constraints: &GenConstraints) -> Option<Level> {
    let mut level = sample_candidate(seed, box_count, index, constraints.wall_density)?;
    let limits = SearchLimits {
        node_budget: constraints.node_budget,
        max_depth: Some(constraints.max_len),
    };
    match planner::solve_with_limits(&level, limits) {
        Ok((plan, _)) if plan.len() as u32 >= constraints.min_len => {
            level.optimal_length = Some(plan.len() as u32);
            Some(level)
        }
        Ok(_) => None,
        Err(PlanError::Level(e)) => panic!("generator produced a malformed level: {e}"),
        Err(_) => None,
    }
}

pub fn generate(seed: u64, box_count: usize, count: usize, constraints: &GenConstraints) -> Result<LevelSet, GenError> {
    if !(1..=3).contains(&box_count) {
        return Err(GenError::BoxCount(box_count));
    }
    if count == 0 {
        return Err(GenError::EmptyRequest);
    }
    const CHUNK: usize = 64;
    let mut levels = Vec::with_capacity(count);
    let mut next = 0usize;
    while levels.len() < count {
        if next >= constraints.max_candidates {
            return Err(GenError::BudgetExhausted {
                tried: next,
                produced: levels.len(),
                requested: count,
            });
        }
        let end = (next + CHUNK).min(constraints.max_candidates);
        let accepted: Vec<Option<Level>> = (next..end)
            .into_par_iter()
            .map(|i| evaluate_candidate(seed, box_count, i as u64, constraints))
            .collect();
        levels.extend(accepted.into_iter().flatten().take(count - levels.len()));
        next = end;
    }
    Ok(LevelSet {
        levels,
        box_count,
        seed,
        constraints: *constraints,
    })
}

/// How the evaluation subset relates to the training subset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Test levels are disjoint from training levels.
    #[default]
    Disjoint,
    /// Test levels are drawn from the training levels.
    Overlapping,
}

/// Seeded selection of `train` and `test` subsets; each subset keeps the set's order.
pub fn split(set: &LevelSet, train: usize, test: usize, seed: u64, mode: SplitMode) -> Result<(LevelSet, LevelSet), GenError> {
    let needed = match mode {
        SplitMode::Disjoint => train + test,
        SplitMode::Overlapping => train.max(test),
    };
    if needed > set.len() {
        return Err(GenError::Insufficient { needed, available: set.len() });
    }
    let mut rng = stream_rng(seed, &[0x73706c6974]);
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut rng);
    let mut train_idx: Vec<usize> = order[..train].to_vec();
    let mut test_idx: Vec<usize> = match mode {
        SplitMode::Disjoint => order[train..train + test].to_vec(),
        SplitMode::Overlapping => {
            let mut pool = train_idx.clone();
            pool.shuffle(&mut rng);
            pool.truncate(test);
            pool
        }
    };
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let pick = |idx: &[usize]| LevelSet {
        levels: idx.iter().map(|&i| set.levels[i].clone()).collect(),
        box_count: set.box_count,
        seed: set.seed,
        constraints: set.constraints,
    };
    Ok((pick(&train_idx), pick(&test_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine;

    #[test]
    fn generation_is_deterministic_and_solvable() {
        let c = GenConstraints::default();
        let a = generate(11, 1, 12, &c).unwrap();
        let b = generate(11, 1, 12, &c).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(a.manifest(), b.manifest());
        assert_eq!(a.len(), 12);
        for l in &a.levels {
            engine::reset(l).unwrap();
            assert!(l.boxes.iter().all(|&b| !l.board.is_target(b)));
            assert!(floor_connected(&l.board));
            let len = l.optimal_length.unwrap();
            assert!((c.min_len..=c.max_len).contains(&len));
            let plan = planner::solve_optimal(l, c.node_budget).unwrap();
            assert_eq!(plan.len() as u32, len);
            assert!(planner::replay_solves(l, &plan));
        }
        let ids: std::collections::HashSet<_> = a.levels.iter().map(|l| &l.id).collect();
        assert_eq!(ids.len(), a.len());
    }

    #[test]
    fn rejects_bad_requests() {
        let c = GenConstraints::default();
        assert!(matches!(generate(1, 4, 5, &c), Err(GenError::BoxCount(4))));
        assert!(matches!(generate(1, 1, 0, &c), Err(GenError::EmptyRequest)));
        let tight = GenConstraints {
            min_len: 59,
            max_len: 60,
            max_candidates: 64,
            ..c
        };
        assert!(matches!(generate(1, 1, 5, &tight), Err(GenError::BudgetExhausted { tried: 64, .. })));
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let set = generate(3, 1, 12, &GenConstraints::trivial()).unwrap();
        assert!(matches!(split(&set, 10, 3, 0, SplitMode::Disjoint), Err(GenError::Insufficient { .. })));
        let (tr, te) = split(&set, 8, 4, 5, SplitMode::Disjoint).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 4));
        assert!(tr.levels.iter().all(|l| !te.levels.contains(l)));
        let (tr2, te2) = split(&set, 8, 4, 5, SplitMode::Disjoint).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);
        let (tr3, te3) = split(&set, 10, 10, 5, SplitMode::Overlapping).unwrap();
        assert!(te3.levels.iter().all(|l| tr3.levels.contains(l)));
    }

    #[test]
    fn manifest_round_trip() {
        let set = generate(5, 2, 4, &GenConstraints::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (txt, _) = set.save(dir.path(), "two").unwrap();
        let back = LevelSet::load(&txt).unwrap();
        assert_eq!(back, set);
    }
}
