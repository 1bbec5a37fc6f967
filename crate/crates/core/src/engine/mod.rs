//! Sokoban rules on a fixed 10x10 board.
//!
//! States are values: [`step`] takes a state by reference and returns the
//! successor together with a [`StepOutcome`]. Rewards are carried as integer
//! tenths ([`Reward`]) so that episode sums are exact.

mod level;
mod render;

pub use level::{format_levels, parse_levels, Level, LevelError};
pub use render::{render, Observation, PaletteId, OBS_CHANNELS, OBS_LEN, OBS_SIZE, TILE_PX};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Side length of the board, border walls included.
pub const BOARD_SIZE: usize = 10;
pub const CELL_COUNT: usize = BOARD_SIZE * BOARD_SIZE;
pub const MAX_BOXES: usize = 3;
/// Episode step cap shared by training and evaluation.
pub const MAX_EPISODE_STEPS: u32 = 120;

/// A board cell, stored as `10 * row + col`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell(u8);

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        assert!(row < BOARD_SIZE && col < BOARD_SIZE, "cell ({row}, {col}) off board");
        Cell((row * BOARD_SIZE + col) as u8)
    }

    pub fn from_index(index: usize) -> Self {
        assert!(index < CELL_COUNT, "cell index {index} off board");
        Cell(index as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn row(self) -> usize {
        self.index() / BOARD_SIZE
    }

    pub fn col(self) -> usize {
        self.index() % BOARD_SIZE
    }

    pub fn is_border(self) -> bool {
        let (r, c) = (self.row(), self.col());
        r == 0 || c == 0 || r == BOARD_SIZE - 1 || c == BOARD_SIZE - 1
    }

    /// Neighbouring cell in the direction of `action`, if it is on the board.
    pub fn neighbor(self, action: Action) -> Option<Cell> {
        let (dr, dc) = action.delta();
        let r = self.row() as isize + dr;
        let c = self.col() as isize + dc;
        if r < 0 || c < 0 || r >= BOARD_SIZE as isize || c >= BOARD_SIZE as isize {
            None
        } else {
            Some(Cell::new(r as usize, c as usize))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tile {
    Wall,
    Floor,
    Target,
}

/// The four moves. The discriminant is the action index used by the policy head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Action::ALL.get(index).copied()
    }

    /// (row, col) displacement.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Action::Up => 'u',
            Action::Down => 'd',
            Action::Left => 'l',
            Action::Right => 'r',
        }
    }

    pub fn from_char(c: char) -> Option<Action> {
        match c.to_ascii_lowercase() {
            'u' => Some(Action::Up),
            'd' => Some(Action::Down),
            'l' => Some(Action::Left),
            'r' => Some(Action::Right),
            _ => None,
        }
    }
}

/// Static tiles of a board (walls, floor, targets). Boxes and the player live in [`GameState`].
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Board {
    tiles: [Tile; CELL_COUNT],
}

impl Board {
    /// A board with a wall border and an all-floor interior.
    pub fn open() -> Self {
        let mut tiles = [Tile::Floor; CELL_COUNT];
        for (i, t) in tiles.iter_mut().enumerate() {
            if Cell::from_index(i).is_border() {
                *t = Tile::Wall;
            }
        }
        Board { tiles }
    }

    pub fn from_tiles(tiles: [Tile; CELL_COUNT]) -> Self {
        Board { tiles }
    }

    pub fn tile(&self, cell: Cell) -> Tile {
        self.tiles[cell.index()]
    }

    pub fn set(&mut self, cell: Cell, tile: Tile) {
        self.tiles[cell.index()] = tile;
    }

    pub fn is_wall(&self, cell: Cell) -> bool {
        self.tile(cell) == Tile::Wall
    }

    pub fn is_target(&self, cell: Cell) -> bool {
        self.tile(cell) == Tile::Target
    }

    pub fn targets(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..CELL_COUNT).map(Cell::from_index).filter(|&c| self.is_target(c))
    }

    pub fn tiles(&self) -> &[Tile; CELL_COUNT] {
        &self.tiles
    }
}

impl fmt::Debug for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..BOARD_SIZE {
            for c in 0..BOARD_SIZE {
                let ch = match self.tile(Cell::new(r, c)) {
                    Tile::Wall => '#',
                    Tile::Floor => ' ',
                    Tile::Target => '.',
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Per-step reward in tenths of a point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Reward(pub i32);

impl Reward {
    pub const STEP: Reward = Reward(-1);
    pub const BOX_ON_TARGET: Reward = Reward(10);
    pub const BOX_OFF_TARGET: Reward = Reward(-10);
    pub const SOLVED: Reward = Reward(100);

    pub fn tenths(self) -> i32 {
        self.0
    }

    pub fn as_f32(self) -> f32 {
        self.0 as f32 / 10.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 10.0
    }
}

impl std::ops::Add for Reward {
    type Output = Reward;
    fn add(self, rhs: Reward) -> Reward {
        Reward(self.0 + rhs.0)
    }
}

impl std::iter::Sum for Reward {
    fn sum<I: Iterator<Item = Reward>>(iter: I) -> Reward {
        Reward(iter.map(|r| r.0).sum())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub reward: Reward,
    pub done: bool,
    pub solved: bool,
}

/// Full board configuration plus the step counter.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GameState {
    board: Board,
    /// Sorted box cells.
    boxes: Vec<Cell>,
    player: Cell,
    steps_taken: u32,
}

impl GameState {
    /// Builds a state without checking level well-formedness; see [`reset`] for the checked path.
    pub(crate) fn from_parts(board: Board, mut boxes: Vec<Cell>, player: Cell, steps_taken: u32) -> Self {
        boxes.sort_unstable();
        GameState {
            board,
            boxes,
            player,
            steps_taken,
        }
    }

    pub fn board(&self) -> &Board {
        &self.board
    }

    pub fn boxes(&self) -> &[Cell] {
        &self.boxes
    }

    pub fn player(&self) -> Cell {
        self.player
    }

    pub fn steps_taken(&self) -> u32 {
        self.steps_taken
    }

    pub fn box_count(&self) -> usize {
        self.boxes.len()
    }

    pub fn has_box(&self, cell: Cell) -> bool {
        self.boxes.binary_search(&cell).is_ok()
    }

    pub fn boxes_on_target(&self) -> usize {
        self.boxes.iter().filter(|&&b| self.board.is_target(b)).count()
    }

    pub fn is_solved(&self) -> bool {
        self.boxes_on_target() == self.boxes.len()
    }

    pub fn is_terminal(&self) -> bool {
        self.is_solved() || self.steps_taken >= MAX_EPISODE_STEPS
    }

    /// Same configuration with the player moved to `cell`. Used for sampling states the
    /// player could walk to without pushing.
    pub fn with_player(&self, cell: Cell) -> GameState {
        let mut s = self.clone();
        s.player = cell;
        s
    }

    /// Cells the player can reach without pushing any box.
    pub fn walkable_region(&self) -> Vec<Cell> {
        let mut seen = [false; CELL_COUNT];
        let mut stack = vec![self.player];
        seen[self.player.index()] = true;
        let mut out = Vec::new();
        while let Some(c) = stack.pop() {
            out.push(c);
            for a in Action::ALL {
                if let Some(n) = c.neighbor(a) {
                    if !seen[n.index()] && !self.board.is_wall(n) && !self.has_box(n) {
                        seen[n.index()] = true;
                        stack.push(n);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

impl fmt::Debug for GameState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "GameState(steps_taken={})", self.steps_taken)?;
        f.write_str(&level::format_grid(&self.board, &self.boxes, self.player))
    }
}

/// Starts an episode from `level`. Rejects malformed levels and levels that are already solved.
pub fn reset(level: &Level) -> Result<GameState, LevelError> {
    level.validate()?;
    let state = GameState::from_parts(level.board, level.boxes.clone(), level.player, 0);
    if state.is_solved() {
        return Err(LevelError::AlreadySolved(level.id.clone()));
    }
    Ok(state)
}

/// Applies one action. Blocked moves leave positions unchanged but still cost the step penalty.
pub fn step(state: &GameState, action: Action) -> (GameState, StepOutcome) {
    debug_assert!(!state.is_terminal(), "step called on a terminal state");
    let mut next = state.clone();
    next.steps_taken += 1;
    let mut reward = Reward::STEP;

    if let Some(dest) = state.player.neighbor(action) {
        if !state.board.is_wall(dest) {
            if state.has_box(dest) {
                let beyond = dest.neighbor(action);
                if let Some(beyond) = beyond.filter(|&b| !state.board.is_wall(b) && !state.has_box(b)) {
                    let slot = next.boxes.binary_search(&dest).expect("box present");
                    next.boxes[slot] = beyond;
                    next.boxes.sort_unstable();
                    next.player = dest;
                    let was_on = state.board.is_target(dest);
                    let now_on = state.board.is_target(beyond);
                    if now_on && !was_on {
                        reward = reward + Reward::BOX_ON_TARGET;
                    }
                    if was_on && !now_on {
                        reward = reward + Reward::BOX_OFF_TARGET;
                    }
                }
            } else {
                next.player = dest;
            }
        }
    }

    let solved = next.is_solved();
    if solved {
        reward = reward + Reward::SOLVED;
    }
    let done = solved || next.steps_taken >= MAX_EPISODE_STEPS;
    (next, StepOutcome { reward, done, solved })
}

/// Undiscounted sum of one episode's rewards.
pub fn episode_return(rewards: &[Reward]) -> Reward {
    rewards.iter().copied().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lvl(text: &str) -> Level {
        parse_levels(text).unwrap().remove(0)
    }

    const CORRIDOR: &str = "; corridor
##########
#        #
#@ $ .   #
#        #
#        #
#        #
#        #
#        #
#        #
##########
";

    #[test]
    fn walking_into_wall_is_noop() {
        let s = reset(&lvl(CORRIDOR)).unwrap();
        let (n, out) = step(&s, Action::Left);
        assert_eq!(n.player(), s.player());
        assert_eq!(n.boxes(), s.boxes());
        assert_eq!(out.reward, Reward(-1));
        assert!(!out.done);
        assert_eq!(n.steps_taken(), 1);
    }

    #[test]
    fn three_step_solve_returns_ten_point_seven() {
        let s0 = reset(&lvl(CORRIDOR)).unwrap();
        let mut rewards = Vec::new();
        let (s1, o1) = step(&s0, Action::Right);
        rewards.push(o1.reward);
        assert_eq!(o1.reward, Reward(-1));
        let (s2, o2) = step(&s1, Action::Right);
        rewards.push(o2.reward);
        assert!(!o2.done);
        let (s3, o3) = step(&s2, Action::Right);
        rewards.push(o3.reward);
        assert!(o3.solved && o3.done);
        assert_eq!(o3.reward, Reward(109));
        assert!(s3.is_solved());
        // hand-computed: 10 + 1 - 0.3
        assert_eq!(episode_return(&rewards), Reward(107));
        assert!((episode_return(&rewards).as_f64() - 10.7).abs() < 1e-12);
    }

    #[test]
    fn push_onto_target_with_other_box_off_is_point_nine() {
        let text = "; two
##########
#        #
# @$.    #
#        #
#   $ .  #
#        #
#        #
#        #
#        #
##########
";
        let s = reset(&lvl(text)).unwrap();
        let (n, out) = step(&s, Action::Right);
        assert_eq!(out.reward, Reward(9));
        assert!(!out.done && !out.solved);
        assert_eq!(n.boxes_on_target(), 1);
    }

    #[test]
    fn push_off_target_is_minus_one_point_one() {
        let text = "; off
##########
#        #
# @*     #
#        #
#   $ .  #
#        #
#        #
#        #
#        #
##########
";
        let s = reset(&lvl(text)).unwrap();
        let (_, out) = step(&s, Action::Right);
        assert_eq!(out.reward, Reward(-11));
    }

    #[test]
    fn blocked_push_is_noop() {
        let text = "; blocked
##########
#        #
# @$$ .. #
#        #
#        #
#        #
#        #
#        #
#        #
##########
";
        let s = reset(&lvl(text)).unwrap();
        let (n, out) = step(&s, Action::Right);
        assert_eq!(n.player(), s.player());
        assert_eq!(n.boxes(), s.boxes());
        assert_eq!(out.reward, Reward::STEP);

        let text = CORRIDOR.replace("#@ $ .   #", "#  .   @$#");
        let s = reset(&lvl(&text)).unwrap();
        let (n, _) = step(&s, Action::Right);
        assert_eq!(n.player(), s.player());
        assert_eq!(n.boxes(), s.boxes());
    }

    #[test]
    fn timeout_marks_done_without_solving() {
        let mut s = reset(&lvl(CORRIDOR)).unwrap();
        let mut rewards = Vec::new();
        for i in 0..MAX_EPISODE_STEPS {
            let (n, out) = step(&s, Action::Up);
            rewards.push(out.reward);
            assert_eq!(out.done, i + 1 == MAX_EPISODE_STEPS);
            assert!(!out.solved);
            s = n;
        }
        assert_eq!(episode_return(&rewards), Reward(-120));
        assert!(s.is_terminal());
        assert_eq!(episode_return(&[]), Reward(0));
    }

    #[test]
    fn reset_twice_is_identical_and_counts_boxes() {
        let text = "; two
##########
#        #
# @$.    #
#        #
#   $ .  #
#        #
#        #
#        #
#        #
##########
";
        let l = lvl(text);
        assert_eq!(reset(&l).unwrap(), reset(&l).unwrap());
        assert_eq!(reset(&l).unwrap().box_count(), 2);
    }

    #[test]
    fn reset_rejects_presolved_level() {
        let text = CORRIDOR.replace("#@ $ .   #", "# @*     #");
        let l = lvl(&text);
        assert!(matches!(reset(&l), Err(LevelError::AlreadySolved(_))));
    }

    #[test]
    fn action_indices_are_stable() {
        for (i, a) in Action::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(Action::from_index(i), Some(*a));
            assert_eq!(Action::from_char(a.as_char()), Some(*a));
        }
        assert_eq!(Action::from_index(4), None);
    }
}
