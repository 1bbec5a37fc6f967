//! Pixel rendering. Each board cell becomes an 8x8 sprite; the 80x80 board is
//! centered on an 84x84 canvas whose 2-pixel margin continues the wall sprite.
//!
//! Sprites are two-colour bitmaps: each row is one byte, most significant bit
//! leftmost, set bits take the foreground colour and clear bits the background.

use super::{Cell, GameState, Tile, BOARD_SIZE};
use serde::{Deserialize, Serialize};

pub const TILE_PX: usize = 8;
pub const OBS_SIZE: usize = 84;
pub const OBS_CHANNELS: usize = 3;
pub const OBS_LEN: usize = OBS_CHANNELS * OBS_SIZE * OBS_SIZE;
const MARGIN: usize = (OBS_SIZE - BOARD_SIZE * TILE_PX) / 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaletteId {
    #[default]
    Base,
    Game2,
}

impl std::str::FromStr for PaletteId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "base" => Ok(PaletteId::Base),
            "game2" => Ok(PaletteId::Game2),
            other => Err(format!("unknown palette {other:?} (expected base or game2)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Sprite {
    Wall,
    Floor,
    Target,
    Box,
    BoxOnTarget,
    Player,
    PlayerOnTarget,
}

struct Pattern {
    rows: [u8; 8],
    fg: [u8; 3],
    bg: [u8; 3],
}

const fn pat(rows: u64, fg: [u8; 3], bg: [u8; 3]) -> Pattern {
    Pattern {
        rows: rows.to_be_bytes(),
        fg,
        bg,
    }
}

// Base: brick walls, black floor, red target ring, yellow crate, green agent.
const BASE: [Pattern; 7] = [
    pat(0xFF80_8080_FF08_0808, [60, 40, 30], [150, 85, 45]),
    pat(0x0000_0000_0000_0000, [0, 0, 0], [0, 0, 0]),
    pat(0x0000_3C24_243C_0000, [220, 40, 40], [0, 0, 0]),
    pat(0xFF81_BDA5_A5BD_81FF, [120, 80, 0], [230, 200, 40]),
    pat(0xFF81_BDA5_A5BD_81FF, [220, 40, 40], [230, 200, 40]),
    pat(0x183C_187E_1818_2442, [40, 200, 60], [0, 0, 0]),
    pat(0x183C_187E_1818_2442, [40, 200, 60], [110, 20, 20]),
];

// Game2: same layouts, every class re-textured.
const GAME2: [Pattern; 7] = [
    pat(0xAA55_AA55_AA55_AA55, [70, 70, 160], [30, 30, 90]),
    pat(0x0000_0010_0000_0000, [60, 60, 60], [25, 25, 25]),
    pat(0x8142_2418_1824_4281, [200, 60, 200], [25, 25, 25]),
    pat(0x183C_7EFF_FF7E_3C18, [40, 210, 210], [25, 25, 25]),
    pat(0x183C_7EE7_E77E_3C18, [40, 210, 210], [200, 60, 200]),
    pat(0x3C7E_FFFF_FFFF_7E3C, [250, 140, 20], [25, 25, 25]),
    pat(0x3C7E_E7C3_C3E7_7E3C, [250, 140, 20], [200, 60, 200]),
];

fn table(palette: PaletteId) -> &'static [Pattern; 7] {
    match palette {
        PaletteId::Base => &BASE,
        PaletteId::Game2 => &GAME2,
    }
}

fn pattern(palette: PaletteId, sprite: Sprite) -> &'static Pattern {
    &table(palette)[sprite as usize]
}

impl Pattern {
    fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        if self.rows[y] & (0x80 >> x) != 0 {
            self.fg
        } else {
            self.bg
        }
    }
}

/// 84x84 RGB image, channel-major (`[c][y][x]`), intensities in `[0, 1]`.
#[derive(Clone, PartialEq)]
pub struct Observation {
    pixels: Vec<f32>,
}

impl Observation {
    pub fn from_pixels(pixels: Vec<f32>) -> Self {
        assert_eq!(pixels.len(), OBS_LEN, "observation length");
        Observation { pixels }
    }

    /// Inverse of [`Observation::to_bytes`].
    pub fn from_bytes(bytes: &[u8]) -> Self {
        assert_eq!(bytes.len(), OBS_LEN, "observation length");
        Observation {
            pixels: bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        }
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, channel: usize, y: usize, x: usize) -> f32 {
        self.pixels[(channel * OBS_SIZE + y) * OBS_SIZE + x]
    }

    /// Exact 8-bit encoding; every rendered intensity is a multiple of 1/255.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&p| (p * 255.0).round() as u8).collect()
    }
}

impl std::fmt::Debug for Observation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Observation({}x{}x{})", OBS_CHANNELS, OBS_SIZE, OBS_SIZE)
    }
}

fn sprite_at(state: &GameState, cell: Cell) -> Sprite {
    let target = state.board().tile(cell) == Tile::Target;
    if state.board().is_wall(cell) {
        Sprite::Wall
    } else if state.has_box(cell) {
        if target {
            Sprite::BoxOnTarget
        } else {
            Sprite::Box
        }
    } else if state.player() == cell {
        if target {
            Sprite::PlayerOnTarget
        } else {
            Sprite::Player
        }
    } else {
        match state.board().tile(cell) {
            Tile::Wall => Sprite::Wall,
            Tile::Floor => Sprite::Floor,
            Tile::Target => Sprite::Target,
        }
    }
}

pub fn render(state: &GameState, palette: PaletteId) -> Observation {
    let plane = OBS_SIZE * OBS_SIZE;
    let mut pixels = vec![0f32; OBS_LEN];
    let wall = pattern(palette, Sprite::Wall);
    let board_px = BOARD_SIZE * TILE_PX;
    for y in 0..OBS_SIZE {
        for x in 0..OBS_SIZE {
            let inside = (MARGIN..MARGIN + board_px).contains(&y) && (MARGIN..MARGIN + board_px).contains(&x);
            let rgb = if inside {
                let (by, bx) = (y - MARGIN, x - MARGIN);
                let cell = Cell::new(by / TILE_PX, bx / TILE_PX);
                pattern(palette, sprite_at(state, cell)).pixel(by % TILE_PX, bx % TILE_PX)
            } else {
                // margin keeps the wall sprite phase of the border cells
                let py = (y + TILE_PX - MARGIN) % TILE_PX;
                let px = (x + TILE_PX - MARGIN) % TILE_PX;
                wall.pixel(py, px)
            };
            for (c, &v) in rgb.iter().enumerate() {
                pixels[c * plane + y * OBS_SIZE + x] = v as f32 / 255.0;
            }
        }
    }
    Observation { pixels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{parse_levels, reset, Board};

    const LEVEL: &str = "; r
##########
#  #     #
# @$.    #
#        #
#   * .  #
#    #   #
#    $   #
#   #    #
#        #
##########
";

    fn state() -> GameState {
        reset(&parse_levels(LEVEL).unwrap()[0]).unwrap()
    }

    fn block(obs: &Observation, cell: Cell) -> Vec<f32> {
        let mut v = Vec::new();
        for c in 0..OBS_CHANNELS {
            for y in 0..TILE_PX {
                for x in 0..TILE_PX {
                    v.push(obs.get(c, MARGIN + cell.row() * TILE_PX + y, MARGIN + cell.col() * TILE_PX + x));
                }
            }
        }
        v
    }

    #[test]
    fn rendering_is_pure() {
        let s = state();
        assert!(render(&s, PaletteId::Base) == render(&s, PaletteId::Base));
        assert!(render(&s, PaletteId::Game2) == render(&s, PaletteId::Game2));
    }

    #[test]
    fn palettes_differ_on_every_class() {
        let s = state();
        let a = render(&s, PaletteId::Base);
        let b = render(&s, PaletteId::Game2);
        // wall, target, box, box on target, player
        for cell in [Cell::new(0, 0), Cell::new(2, 4), Cell::new(2, 3), Cell::new(4, 4), Cell::new(2, 2)] {
            assert_ne!(block(&a, cell), block(&b, cell), "cell {cell:?}");
        }
    }

    #[test]
    fn sprites_are_distinct_within_a_palette() {
        for p in [PaletteId::Base, PaletteId::Game2] {
            let t = table(p);
            for i in 0..7 {
                for j in i + 1..7 {
                    let same = (0..8).all(|y| (0..8).all(|x| t[i].pixel(y, x) == t[j].pixel(y, x)));
                    assert!(!same, "{p:?} sprites {i} and {j} coincide");
                }
            }
        }
    }

    #[test]
    fn empty_interior_shows_only_wall_and_floor() {
        // player parked on a border wall cell so no agent sprite is drawn over the interior
        let s = GameState::from_parts(Board::open(), vec![], Cell::new(0, 0), 0);
        let obs = render(&s, PaletteId::Base);
        let wall = pattern(PaletteId::Base, Sprite::Wall);
        let floor = pattern(PaletteId::Base, Sprite::Floor);
        let allowed: Vec<[u8; 3]> = vec![wall.fg, wall.bg, floor.fg, floor.bg];
        let bytes = obs.to_bytes();
        let plane = OBS_SIZE * OBS_SIZE;
        for i in 0..plane {
            let rgb = [bytes[i], bytes[plane + i], bytes[2 * plane + i]];
            assert!(allowed.contains(&rgb), "unexpected colour {rgb:?}");
        }
    }

    #[test]
    fn margin_continues_wall_pattern() {
        let obs = render(&state(), PaletteId::Base);
        // pixel (0,0) sits 2 px above and left of the top-left wall tile
        let wall = pattern(PaletteId::Base, Sprite::Wall);
        let rgb = wall.pixel(6, 6);
        assert_eq!(obs.get(0, 0, 0), rgb[0] as f32 / 255.0);
        assert_eq!(obs.get(1, 0, 0), rgb[1] as f32 / 255.0);
    }

    #[test]
    fn byte_encoding_round_trips() {
        let obs = render(&state(), PaletteId::Game2);
        assert!(Observation::from_bytes(&obs.to_bytes()) == obs);
        assert!(obs.pixels().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }
}
