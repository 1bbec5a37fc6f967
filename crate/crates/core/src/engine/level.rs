//! Level definitions and the plain-text level format.
//!
//! ```text
//! ; <id>
//! ##########
//! #@ $ .   #
//! ...
//! ```
//!
//! `#` wall, ` ` floor, `.` target, `$` box, `*` box on target, `@` player,
//! `+` player on target. Every level is exactly 10 rows of 10 characters.

use super::{Board, Cell, Tile, BOARD_SIZE, CELL_COUNT, MAX_BOXES};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LevelError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("level {id}: {msg}")]
    Malformed { id: String, msg: String },
    #[error("level {0}: all boxes already on targets")]
    AlreadySolved(String),
}

/// An immutable puzzle definition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Level {
    pub id: String,
    pub board: Board,
    pub boxes: Vec<Cell>,
    pub player: Cell,
    /// Optimal plan length in agent steps, once the planner has seen the level.
    pub optimal_length: Option<u32>,
}

impl Level {
    pub fn new(id: impl Into<String>, board: Board, mut boxes: Vec<Cell>, player: Cell) -> Self {
        boxes.sort_unstable();
        Level {
            id: id.into(),
            board,
            boxes,
            player,
            optimal_length: None,
        }
    }

    pub fn box_count(&self) -> usize {
        self.boxes.len()
    }

    /// Checks the structural invariants shared with [`super::GameState`].
    pub fn validate(&self) -> Result<(), LevelError> {
        let bad = |msg: String| LevelError::Malformed { id: self.id.clone(), msg };
        for i in 0..CELL_COUNT {
            let c = Cell::from_index(i);
            if c.is_border() && !self.board.is_wall(c) {
                return Err(bad(format!("border cell ({}, {}) is not a wall", c.row(), c.col())));
            }
        }
        if self.boxes.is_empty() || self.boxes.len() > MAX_BOXES {
            return Err(bad(format!("{} boxes, expected 1..={MAX_BOXES}", self.boxes.len())));
        }
        if self.boxes.windows(2).any(|w| w[0] == w[1]) {
            return Err(bad("two boxes share a cell".into()));
        }
        if let Some(b) = self.boxes.iter().find(|b| self.board.is_wall(**b)) {
            return Err(bad(format!("box inside wall at ({}, {})", b.row(), b.col())));
        }
        if self.board.is_wall(self.player) || self.boxes.contains(&self.player) {
            return Err(bad("player on a wall or box".into()));
        }
        let targets = self.board.targets().count();
        if targets != self.boxes.len() {
            return Err(bad(format!("{targets} targets for {} boxes", self.boxes.len())));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("; {}\n", self.id);
        s.push_str(&format_grid(&self.board, &self.boxes, self.player));
        s
    }
}

pub(crate) fn format_grid(board: &Board, boxes: &[Cell], player: Cell) -> String {
    let mut s = String::with_capacity(CELL_COUNT + BOARD_SIZE);
    for r in 0..BOARD_SIZE {
        for c in 0..BOARD_SIZE {
            let cell = Cell::new(r, c);
            let target = board.is_target(cell);
            let ch = if boxes.contains(&cell) {
                if target {
                    '*'
                } else {
                    '$'
                }
            } else if cell == player {
                if target {
                    '+'
                } else {
                    '@'
                }
            } else {
                match board.tile(cell) {
                    Tile::Wall => '#',
                    Tile::Floor => ' ',
                    Tile::Target => '.',
                }
            };
            s.push(ch);
        }
        s.push('\n');
    }
    s
}

/// Serializes levels in order. `parse_levels(&format_levels(ls))` restores every field but
/// `optimal_length`, which travels in the set manifest instead.
pub fn format_levels(levels: &[Level]) -> String {
    levels.iter().map(Level::to_text).collect()
}

pub fn parse_levels(text: &str) -> Result<Vec<Level>, LevelError> {
    let mut levels = Vec::new();
    let mut current: Option<(String, usize, Vec<&str>)> = None;

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if let Some(id) = line.strip_prefix(';') {
            if let Some((id, start, rows)) = current.take() {
                levels.push(build_level(id, start, &rows)?);
            }
            let id = id.strip_prefix(' ').unwrap_or(id).to_string();
            current = Some((id, lineno, Vec::new()));
        } else {
            match current.as_mut() {
                Some((_, _, rows)) => rows.push(line),
                None if line.trim().is_empty() => {}
                None => {
                    return Err(LevelError::Parse {
                        line: lineno,
                        msg: "grid row before any `; <id>` header".into(),
                    })
                }
            }
        }
    }
    if let Some((id, start, rows)) = current.take() {
        levels.push(build_level(id, start, &rows)?);
    }
    Ok(levels)
}

fn build_level(id: String, header_line: usize, rows: &[&str]) -> Result<Level, LevelError> {
    // tolerate trailing blank lines between blocks
    let mut rows = rows.to_vec();
    while rows.last().is_some_and(|r| r.is_empty()) {
        rows.pop();
    }
    if rows.len() != BOARD_SIZE {
        return Err(LevelError::Parse {
            line: header_line,
            msg: format!("level {id}: {} rows, expected {BOARD_SIZE}", rows.len()),
        });
    }
    let mut board = Board::open();
    let mut boxes = Vec::new();
    let mut player = None;
    for (r, row) in rows.iter().enumerate() {
        let lineno = header_line + 1 + r;
        let chars: Vec<char> = row.chars().collect();
        if chars.len() != BOARD_SIZE {
            return Err(LevelError::Parse {
                line: lineno,
                msg: format!("{} columns, expected {BOARD_SIZE}", chars.len()),
            });
        }
        for (c, ch) in chars.into_iter().enumerate() {
            let cell = Cell::new(r, c);
            let tile = match ch {
                '#' => Tile::Wall,
                ' ' | '$' | '@' => Tile::Floor,
                '.' | '*' | '+' => Tile::Target,
                other => {
                    return Err(LevelError::Parse {
                        line: lineno,
                        msg: format!("unknown character {other:?}"),
                    })
                }
            };
            board.set(cell, tile);
            if ch == '$' || ch == '*' {
                boxes.push(cell);
            }
            if ch == '@' || ch == '+' {
                if player.is_some() {
                    return Err(LevelError::Parse {
                        line: lineno,
                        msg: "second player".into(),
                    });
                }
                player = Some(cell);
            }
        }
    }
    let player = player.ok_or_else(|| LevelError::Parse {
        line: header_line,
        msg: format!("level {id}: no player"),
    })?;
    Ok(Level::new(id, board, boxes, player))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = "; a
##########
#  #     #
# @$.    #
#        #
#   $ .  #
#    #   #
#        #
#   #    #
#        #
##########
; b
##########
#+       #
#        #
#    *   #
#        #
#   $    #
#        #
#        #
#        #
##########
";

    #[test]
    fn text_round_trip_is_bit_exact() {
        let levels = parse_levels(TWO).unwrap();
        assert_eq!(levels.len(), 2);
        assert_eq!(levels[0].id, "a");
        assert_eq!(levels[1].id, "b");
        assert_eq!(format_levels(&levels), TWO);
        assert_eq!(parse_levels(&format_levels(&levels)).unwrap(), levels);
    }

    #[test]
    fn box_on_target_is_representable() {
        let levels = parse_levels(TWO).unwrap();
        let b = &levels[1];
        assert!(b.board.is_target(b.player));
        assert_eq!(b.boxes.len(), 2);
        assert!(b.validate().is_ok());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_levels("##########\n").is_err());
        let short = TWO.replace("#  #     #\n", "");
        assert!(parse_levels(&short).is_err());
        let bad_char = TWO.replacen("#  #     #", "#  #  x  #", 1);
        assert!(parse_levels(&bad_char).is_err());
        let two_players = TWO.replacen("#  #     #", "#  #  @  #", 1);
        assert!(parse_levels(&two_players).is_err());
    }

    #[test]
    fn validate_catches_invariant_violations() {
        let mut l = parse_levels(TWO).unwrap().remove(0);
        l.board.set(Cell::new(0, 4), Tile::Floor);
        assert!(l.validate().is_err());

        let mut l = parse_levels(TWO).unwrap().remove(0);
        l.board.set(Cell::new(6, 6), Tile::Target);
        assert!(l.validate().is_err());
    }
}
