use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::mask::{iou, render_ascii, GridSpec, Mask};
use super::shapes::ShapeLibrary;
use crate::error::{Error, Result};

/// Counter-clockwise orientation in 45 degree steps, stored as a step index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Orientation(u8);

impl Orientation {
    pub const ZERO: Orientation = Orientation(0);

    pub fn from_index(steps: u8) -> Self {
        Orientation(steps % 8)
    }

    pub fn from_degrees(degrees: u32) -> Result<Self> {
        if !degrees.is_multiple_of(45) {
            return Err(Error::Config(format!(
                "orientation {degrees} is not a multiple of 45"
            )));
        }
        Ok(Orientation(((degrees / 45) % 8) as u8))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn degrees(self) -> u32 {
        self.0 as u32 * 45
    }

    /// Adds `steps` eighth-turns.
    pub fn rotated(self, steps: u8) -> Self {
        Orientation((self.0 + steps % 8) % 8)
    }

    /// Eighth-turns needed to go counter-clockwise from `self` to `to`.
    pub fn steps_to(self, to: Orientation) -> u8 {
        (to.0 + 8 - self.0) % 8
    }

    pub fn all() -> impl Iterator<Item = Orientation> + Clone {
        (0..8).map(Orientation)
    }
}

impl Serialize for Orientation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u32(self.degrees())
    }
}

impl<'de> Deserialize<'de> for Orientation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let degrees = u32::deserialize(d)?;
        Orientation::from_degrees(degrees).map_err(serde::de::Error::custom)
    }
}

/// Size exponent `k`; the shape is drawn at `2^k` times its base size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScaleExp(i8);

impl ScaleExp {
    pub const MIN: ScaleExp = ScaleExp(-1);
    pub const BASE: ScaleExp = ScaleExp(0);
    pub const MAX: ScaleExp = ScaleExp(1);

    pub fn new(exponent: i8) -> Result<Self> {
        if !(-1..=1).contains(&exponent) {
            return Err(Error::Config(format!(
                "scale exponent {exponent} outside [-1, 1]"
            )));
        }
        Ok(ScaleExp(exponent))
    }

    pub fn exponent(self) -> i8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = ScaleExp> + Clone {
        (-1..=1).map(ScaleExp)
    }
}

impl Serialize for ScaleExp {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.0)
    }
}

impl<'de> Deserialize<'de> for ScaleExp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let k = i8::deserialize(d)?;
        ScaleExp::new(k).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    /// `(dcol, drow)`; rows grow downward.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Direction::Up => (0, -1),
            Direction::Down => (0, 1),
            Direction::Left => (-1, 0),
            Direction::Right => (1, 0),
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rotation {
    Deg45,
    Deg90,
    Deg180,
}

impl Rotation {
    pub fn steps(self) -> u8 {
        match self {
            Rotation::Deg45 => 1,
            Rotation::Deg90 => 2,
            Rotation::Deg180 => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scaling {
    Double,
    Half,
}

/// One atomic transformation, or the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transform {
    Identity,
    Rotate(Rotation),
    Translate(Direction),
    Scale(Scaling),
}

/// Orientation, anchor and scale of one library shape.
///
/// The anchor `(col, row)` is the top-left corner of the footprint's bounding box.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShapeState {
    pub shape: String,
    pub orientation: Orientation,
    pub scale: ScaleExp,
    pub col: usize,
    pub row: usize,
}

impl ShapeState {
    /// Short stable fingerprint used in traces and uniqueness keys.
    pub fn digest(&self) -> String {
        let canonical = format!(
            "{}|{}|{}|{}|{}",
            self.shape,
            self.orientation.degrees(),
            self.scale.exponent(),
            self.col,
            self.row
        );
        let hash = Sha256::digest(canonical.as_bytes());
        hex::encode(&hash[..8])
    }
}

impl fmt::Display for ShapeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}@({},{}) rot={} scale={}",
            self.shape,
            self.col,
            self.row,
            self.orientation.degrees(),
            self.scale.exponent()
        )
    }
}

/// What a transform did to the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    /// Applied exactly as requested.
    Applied,
    /// Identity transform.
    NoOp,
    /// Translation would leave the grid; position kept.
    Clamped,
    /// Rotation or scaling overflowed the grid; anchor shifted back inside.
    Repaired,
    /// Scaling past the exponent bounds; state kept.
    OutOfRange,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub state: ShapeState,
    pub effect: Effect,
}

/// A grid plus the shape library: everything needed to move and draw shapes.
#[derive(Debug, Clone)]
pub struct Board {
    grid: GridSpec,
    library: Arc<ShapeLibrary>,
}

impl Board {
    pub fn new(grid: GridSpec, library: Arc<ShapeLibrary>) -> Result<Self> {
        grid.validate()?;
        let (w, h) = library.max_extent();
        if w > grid.width || h > grid.height {
            return Err(Error::Config(format!(
                "library masks up to {w}x{h} do not fit a {}x{} grid",
                grid.width, grid.height
            )));
        }
        Ok(Board { grid, library })
    }

    pub fn with_builtin(grid: GridSpec) -> Result<Self> {
        Self::new(grid, ShapeLibrary::builtin())
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn library(&self) -> &Arc<ShapeLibrary> {
        &self.library
    }

    pub fn footprint(&self, state: &ShapeState) -> Result<&Mask> {
        self.library.mask(&state.shape, state.orientation, state.scale)
    }

    fn fits(&self, mask: &Mask, col: usize, row: usize) -> bool {
        col + mask.width() <= self.grid.width && row + mask.height() <= self.grid.height
    }

    pub fn contains(&self, state: &ShapeState) -> Result<bool> {
        let mask = self.footprint(state)?;
        Ok(self.fits(mask, state.col, state.row))
    }

    /// Builds a state, rejecting footprints that leave the grid.
    pub fn state(
        &self,
        shape: &str,
        orientation: Orientation,
        scale: ScaleExp,
        col: usize,
        row: usize,
    ) -> Result<ShapeState> {
        let state = ShapeState {
            shape: shape.to_string(),
            orientation,
            scale,
            col,
            row,
        };
        self.validate_state(&state)?;
        Ok(state)
    }

    pub fn validate_state(&self, state: &ShapeState) -> Result<()> {
        if !self.contains(state)? {
            return Err(Error::Config(format!(
                "{state} does not fit a {}x{} grid",
                self.grid.width, self.grid.height
            )));
        }
        Ok(())
    }

    /// Anchor positions at which the given footprint fits.
    pub fn anchor_range(&self, shape: &str, orientation: Orientation, scale: ScaleExp) -> Result<(usize, usize)> {
        let mask = self.library.mask(shape, orientation, scale)?;
        Ok((
            self.grid.width - mask.width() + 1,
            self.grid.height - mask.height() + 1,
        ))
    }

    pub fn rasterize(&self, state: &ShapeState) -> Result<Mask> {
        let mask = self.footprint(state)?;
        Ok(Mask::placed(mask, self.grid, state.col, state.row))
    }

    pub fn render(&self, state: &ShapeState) -> Result<String> {
        Ok(render_ascii(&self.rasterize(state)?))
    }

    pub fn iou(&self, a: &ShapeState, b: &ShapeState) -> Result<f64> {
        iou(&self.rasterize(a)?, &self.rasterize(b)?)
    }

    /// Re-anchors `state` with its (new) footprint back inside the grid using
    /// the smallest shift toward the interior.
    fn repaired(&self, mut state: ShapeState) -> Result<Transition> {
        let mask = self.footprint(&state)?;
        if self.fits(mask, state.col, state.row) {
            return Ok(Transition {
                state,
                effect: Effect::Applied,
            });
        }
        state.col = state.col.min(self.grid.width - mask.width());
        state.row = state.row.min(self.grid.height - mask.height());
        Ok(Transition {
            state,
            effect: Effect::Repaired,
        })
    }

    pub fn rotate(&self, state: &ShapeState, rotation: Rotation) -> Result<Transition> {
        let next = ShapeState {
            orientation: state.orientation.rotated(rotation.steps()),
            ..state.clone()
        };
        self.repaired(next)
    }

    pub fn translate(&self, state: &ShapeState, dir: Direction) -> Result<Transition> {
        let mask = self.footprint(state)?;
        let (dc, dr) = dir.delta();
        let col = state.col as i64 + dc;
        let row = state.row as i64 + dr;
        if col < 0 || row < 0 || !self.fits(mask, col as usize, row as usize) {
            return Ok(Transition {
                state: state.clone(),
                effect: Effect::Clamped,
            });
        }
        Ok(Transition {
            state: ShapeState {
                col: col as usize,
                row: row as usize,
                ..state.clone()
            },
            effect: Effect::Applied,
        })
    }

    pub fn scale(&self, state: &ShapeState, scaling: Scaling) -> Result<Transition> {
        // Surface unknown shapes even when the step is out of range.
        self.footprint(state)?;
        let k = state.scale.exponent()
            + match scaling {
                Scaling::Double => 1,
                Scaling::Half => -1,
            };
        let Ok(scale) = ScaleExp::new(k) else {
            return Ok(Transition {
                state: state.clone(),
                effect: Effect::OutOfRange,
            });
        };
        self.repaired(ShapeState {
            scale,
            ..state.clone()
        })
    }

    pub fn apply(&self, state: &ShapeState, transform: Transform) -> Result<Transition> {
        match transform {
            Transform::Identity => {
                self.footprint(state)?;
                Ok(Transition {
                    state: state.clone(),
                    effect: Effect::NoOp,
                })
            }
            Transform::Rotate(r) => self.rotate(state, r),
            Transform::Translate(d) => self.translate(state, d),
            Transform::Scale(s) => self.scale(state, s),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes::CHEVRON;

    fn board() -> Board {
        Board::with_builtin(GridSpec::default()).unwrap()
    }

    fn centered(board: &Board) -> ShapeState {
        board
            .state(CHEVRON, Orientation::ZERO, ScaleExp::BASE, 12, 12)
            .unwrap()
    }

    #[test]
    fn rotation_adds_degrees() {
        let b = board();
        let s = centered(&b);
        let t = b.rotate(&s, Rotation::Deg90).unwrap();
        assert_eq!(t.state.orientation.degrees(), 90);
        assert_eq!((t.state.col, t.state.row), (12, 12));
        assert_eq!(t.effect, Effect::Applied);
    }

    #[test]
    fn two_eighth_turns_equal_library_quarter() {
        let b = board();
        let s = b
            .state(CHEVRON, Orientation::from_index(1), ScaleExp::BASE, 10, 10)
            .unwrap();
        let t = b.rotate(&s, Rotation::Deg45).unwrap().state;
        assert_eq!(
            b.footprint(&t).unwrap(),
            b.library()
                .mask(CHEVRON, Orientation::from_degrees(90).unwrap(), ScaleExp::BASE)
                .unwrap()
        );
    }

    #[test]
    fn translation_moves_one_cell_and_clamps_at_border() {
        let b = board();
        let s = centered(&b);
        let moved = b.translate(&s, Direction::Right).unwrap();
        assert_eq!(moved.state.col, 13);

        let w = b.footprint(&s).unwrap().width();
        let flush = ShapeState {
            col: 27 - w,
            ..s.clone()
        };
        let t = b.translate(&flush, Direction::Right).unwrap();
        assert_eq!(t.effect, Effect::Clamped);
        assert_eq!(t.state, flush);

        let top = ShapeState { row: 0, ..s };
        assert_eq!(b.translate(&top, Direction::Up).unwrap().effect, Effect::Clamped);
    }

    #[test]
    fn scaling_out_of_range_is_flagged_noop() {
        let b = board();
        let s = ShapeState {
            scale: ScaleExp::MAX,
            ..centered(&b)
        };
        let t = b.scale(&s, Scaling::Double).unwrap();
        assert_eq!(t.effect, Effect::OutOfRange);
        assert_eq!(t.state, s);
    }

    #[test]
    fn doubling_against_border_is_repaired() {
        let b = board();
        let s = b
            .state(CHEVRON, Orientation::ZERO, ScaleExp::BASE, 24, 24)
            .unwrap();
        let t = b.scale(&s, Scaling::Double).unwrap();
        assert_eq!(t.effect, Effect::Repaired);
        assert_eq!((t.state.col, t.state.row), (21, 21));
        assert!(b.contains(&t.state).unwrap());
    }

    #[test]
    fn doubling_multiplies_population_by_four() {
        let b = board();
        let s = centered(&b);
        let d = b.scale(&s, Scaling::Double).unwrap().state;
        assert_eq!(
            b.rasterize(&d).unwrap().population(),
            4 * b.rasterize(&s).unwrap().population()
        );
    }

    #[test]
    fn unknown_shape_is_config_error() {
        let b = board();
        let s = ShapeState {
            shape: "blob".into(),
            ..centered(&b)
        };
        assert!(matches!(b.rotate(&s, Rotation::Deg90), Err(Error::UnknownShape(_))));
        assert!(matches!(b.scale(&s, Scaling::Half), Err(Error::UnknownShape(_))));
    }

    #[test]
    fn orientation_arithmetic() {
        let o = Orientation::from_degrees(315).unwrap();
        assert_eq!(o.rotated(1), Orientation::ZERO);
        assert_eq!(Orientation::ZERO.steps_to(o), 7);
        assert!(Orientation::from_degrees(30).is_err());
        assert_eq!(Orientation::from_degrees(360).unwrap(), Orientation::ZERO);
    }

    #[test]
    fn digest_is_stable_and_distinguishes_states() {
        let b = board();
        let s = centered(&b);
        assert_eq!(s.digest(), centered(&b).digest());
        assert_ne!(s.digest(), ShapeState { col: 13, ..s.clone() }.digest());
        assert_eq!(s.digest().len(), 16);
    }

    #[test]
    fn state_serializes_with_degrees() {
        let s = centered(&board());
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(
            json,
            r#"{"shape":"chevron","orientation":0,"scale":0,"col":12,"row":12}"#
        );
        let back: ShapeState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<ShapeState>(
            r#"{"shape":"chevron","orientation":10,"scale":0,"col":1,"row":1}"#
        )
        .is_err());
    }
}
