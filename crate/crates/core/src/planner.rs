//! Step-optimal Sokoban search.
//!
//! Breadth-first search over canonical `(player, sorted boxes)` keys. Successors
//! are generated in the fixed action order Up, Down, Left, Right and the first
//! discovery of a key wins, so plans are deterministic. The only pruning is
//! the corner deadlock: a box pushed into a non-target cell with a wall on one
//! vertical and one horizontal side can never move again.

use crate::engine::{self, Action, Board, Cell, Level, LevelError, CELL_COUNT, MAX_BOXES};
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const DEFAULT_NODE_BUDGET: usize = 5_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("proved unsolvable after exhausting {explored} states")]
    Unsolvable { explored: usize },
    #[error("node budget of {budget} states exceeded")]
    BudgetExceeded { budget: usize },
    #[error("no solution within {max_depth} steps")]
    DepthLimit { max_depth: u32 },
    #[error(transparent)]
    Level(#[from] LevelError),
}

/// A step-optimal action sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub actions: Vec<Action>,
}

impl Plan {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Compact `udlr` string.
    pub fn to_moves(&self) -> String {
        self.actions.iter().map(|a| a.as_char()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchLimits {
    pub node_budget: usize,
    /// Stop once every remaining state is deeper than this.
    pub max_depth: Option<u32>,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits {
            node_budget: DEFAULT_NODE_BUDGET,
            max_depth: None,
        }
    }
}

/// Canonical search key: player in the low 7 bits, then each sorted box in 7 bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SearchKey(u32);

impl SearchKey {
    pub fn new(player: Cell, boxes: &[Cell]) -> Self {
        debug_assert!(boxes.len() <= MAX_BOXES);
        debug_assert!(boxes.windows(2).all(|w| w[0] < w[1]));
        let mut k = player.index() as u32;
        for (i, b) in boxes.iter().enumerate() {
            k |= (b.index() as u32 + 1) << (7 * (i + 1));
        }
        SearchKey(k)
    }

    pub fn player(self) -> Cell {
        Cell::from_index((self.0 & 0x7f) as usize)
    }

    pub fn boxes(self) -> impl Iterator<Item = Cell> {
        (1..=MAX_BOXES).filter_map(move |i| {
            let v = (self.0 >> (7 * i)) & 0x7f;
            (v != 0).then(|| Cell::from_index(v as usize - 1))
        })
    }
}

/// Non-target cells with a wall on a vertical side and on a horizontal side.
pub fn corner_deadlocks(board: &Board) -> [bool; CELL_COUNT] {
    let mut dead = [false; CELL_COUNT];
    for (i, d) in dead.iter_mut().enumerate() {
        let c = Cell::from_index(i);
        if board.is_wall(c) || board.is_target(c) {
            continue;
        }
        let wall = |a: Action| c.neighbor(a).is_none_or(|n| board.is_wall(n));
        let vertical = wall(Action::Up) || wall(Action::Down);
        let horizontal = wall(Action::Left) || wall(Action::Right);
        *d = vertical && horizontal;
    }
    dead
}

/// Cells from which a lone box can never reach any target. Computed by pulling
/// a box backwards from every target; a superset of the corner deadlocks.
pub fn dead_squares(board: &Board) -> [bool; CELL_COUNT] {
    let mut live = [false; CELL_COUNT];
    let mut stack: Vec<Cell> = board.targets().collect();
    for t in &stack {
        live[t.index()] = true;
    }
    while let Some(c) = stack.pop() {
        for a in Action::ALL {
            // pulling the box from c one step in direction a needs the player on the
            // far side, two free cells in a row
            let Some(prev) = c.neighbor(a) else { continue };
            let Some(player) = prev.neighbor(a) else { continue };
            if board.is_wall(prev) || board.is_wall(player) || live[prev.index()] {
                continue;
            }
            live[prev.index()] = true;
            stack.push(prev);
        }
    }
    let mut dead = [false; CELL_COUNT];
    for i in 0..CELL_COUNT {
        dead[i] = !board.is_wall(Cell::from_index(i)) && !live[i];
    }
    dead
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub explored: usize,
}

pub fn solve_optimal(level: &Level, node_budget: usize) -> Result<Plan, PlanError> {
    solve_with_limits(level, SearchLimits { node_budget, max_depth: None }).map(|(plan, _)| plan)
}

pub fn solve_with_limits(level: &Level, limits: SearchLimits) -> Result<(Plan, SearchStats), PlanError> {
    level.validate()?;
    let board = &level.board;
    let dead = corner_deadlocks(board);
    let is_solved = |boxes: &[Cell]| boxes.iter().all(|&b| board.is_target(b));

    let start = SearchKey::new(level.player, &level.boxes);
    if is_solved(&level.boxes) {
        return Ok((Plan { actions: vec![] }, SearchStats { explored: 1 }));
    }
    if level.boxes.iter().any(|b| dead[b.index()]) {
        return Err(PlanError::Unsolvable { explored: 1 });
    }

    // key -> (parent, action taking parent to key)
    let mut parents: FxHashMap<SearchKey, (SearchKey, Action)> = FxHashMap::default();
    parents.insert(start, (start, Action::Up));
    let mut frontier = vec![start];
    let mut next = Vec::new();
    let mut depth = 0u32;
    let mut boxes = Vec::with_capacity(MAX_BOXES);

    while !frontier.is_empty() {
        if limits.max_depth.is_some_and(|d| depth >= d) {
            return Err(PlanError::DepthLimit {
                max_depth: limits.max_depth.unwrap_or_default(),
            });
        }
        for &key in &frontier {
            let player = key.player();
            for action in Action::ALL {
                let Some(dest) = player.neighbor(action) else { continue };
                if board.is_wall(dest) {
                    continue;
                }
                boxes.clear();
                boxes.extend(key.boxes());
                let mut pushed = false;
                if let Some(slot) = boxes.iter().position(|&b| b == dest) {
                    let Some(beyond) = dest.neighbor(action) else { continue };
                    if board.is_wall(beyond) || boxes.contains(&beyond) || dead[beyond.index()] {
                        continue;
                    }
                    boxes[slot] = beyond;
                    boxes.sort_unstable();
                    pushed = true;
                }
                let child = SearchKey::new(dest, &boxes);
                if parents.contains_key(&child) {
                    continue;
                }
                parents.insert(child, (key, action));
                if pushed && is_solved(&boxes) {
                    let plan = reconstruct(&parents, start, child);
                    return Ok((plan, SearchStats { explored: parents.len() }));
                }
                if parents.len() >= limits.node_budget {
                    return Err(PlanError::BudgetExceeded { budget: limits.node_budget });
                }
                next.push(child);
            }
        }
        std::mem::swap(&mut frontier, &mut next);
        next.clear();
        depth += 1;
    }
    Err(PlanError::Unsolvable { explored: parents.len() })
}

fn reconstruct(parents: &FxHashMap<SearchKey, (SearchKey, Action)>, start: SearchKey, goal: SearchKey) -> Plan {
    let mut actions = Vec::new();
    let mut k = goal;
    while k != start {
        let (p, a) = parents[&k];
        actions.push(a);
        k = p;
    }
    actions.reverse();
    Plan { actions }
}

/// Replays `plan` through the engine; true iff the final step reports solved and
/// no earlier step ended the episode.
pub fn replay_solves(level: &Level, plan: &Plan) -> bool {
    let Ok(mut state) = engine::reset(level) else {
        return false;
    };
    for (i, &a) in plan.actions.iter().enumerate() {
        let (next, out) = engine::step(&state, a);
        if out.done {
            return out.solved && i + 1 == plan.len();
        }
        state = next;
    }
    false
}

/// Distribution of optimal plan lengths over a level set.
#[derive(Clone, Debug, PartialEq)]
pub struct LengthHistogram {
    pub counts: BTreeMap<u32, usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub min: u32,
    pub median: f64,
    pub max: u32,
    pub mean: f64,
}

impl LengthHistogram {
    pub fn from_lengths(lengths: impl IntoIterator<Item = u32>) -> Self {
        let mut counts = BTreeMap::new();
        for l in lengths {
            *counts.entry(l).or_insert(0) += 1;
        }
        LengthHistogram { counts }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn stats(&self) -> Option<LengthStats> {
        let sorted: Vec<u32> = self.counts.iter().flat_map(|(&l, &n)| std::iter::repeat_n(l, n)).collect();
        let n = sorted.len();
        if n == 0 {
            return None;
        }
        let median = if n % 2 == 1 {
            sorted[n / 2] as f64
        } else {
            (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
        };
        Some(LengthStats {
            min: sorted[0],
            median,
            max: sorted[n - 1],
            mean: sorted.iter().map(|&l| l as f64).sum::<f64>() / n as f64,
        })
    }

    /// `length,count` rows in ascending length order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("length,count\n");
        for (l, n) in &self.counts {
            s.push_str(&format!("{l},{n}\n"));
        }
        s
    }
}

/// Solves every level and tallies plan lengths. The first failure aborts.
pub fn length_histogram(levels: &[Level], node_budget: usize) -> Result<LengthHistogram, (String, PlanError)> {
    let mut lengths = Vec::with_capacity(levels.len());
    for level in levels {
        let plan = solve_optimal(level, node_budget).map_err(|e| (level.id.clone(), e))?;
        lengths.push(plan.len() as u32);
    }
    Ok(LengthHistogram::from_lengths(lengths))
}
