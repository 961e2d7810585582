use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SHAPE_CELL: char = '#';
pub const EMPTY_CELL: char = ' ';
pub const BORDER: char = '*';

/// The bounded board every shape lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    pub const MIN_SIDE: usize = 8;

    pub fn new(width: usize, height: usize) -> Result<Self> {
        let spec = GridSpec { width, height };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < Self::MIN_SIDE || self.height < Self::MIN_SIDE {
            return Err(Error::Config(format!(
                "grid must be at least {min}x{min}, got {}x{}",
                self.width,
                self.height,
                min = Self::MIN_SIDE
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            width: 27,
            height: 27,
        }
    }
}

/// Row-major boolean raster. `true` marks a shape cell.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn for_grid(grid: GridSpec) -> Self {
        Self::empty(grid.width, grid.height)
    }

    /// Builds a mask from rows where `#` is set and any other character is clear.
    /// Rows shorter than the longest are padded.
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Self {
        let height = rows.len();
        let width = rows
            .iter()
            .map(|r| r.as_ref().chars().count())
            .max()
            .unwrap_or(0);
        let mut mask = Self::empty(width, height);
        for (row, line) in rows.iter().enumerate() {
            for (col, ch) in line.as_ref().chars().enumerate() {
                if ch == SHAPE_CELL {
                    mask.set(col, row, true);
                }
            }
        }
        mask
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        col < self.width && row < self.height && self.bits[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        assert!(col < self.width && row < self.height, "cell out of bounds");
        self.bits[row * self.width + col] = value;
    }

    pub fn population(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    pub fn same_dims(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    fn check_dims(&self, other: &Mask) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left_width: self.width,
                left_height: self.height,
                right_width: other.width,
                right_height: other.height,
            })
        }
    }

    /// Shrinks the mask to the bounding box of its set cells.
    pub fn trimmed(&self) -> Mask {
        let Some((c0, r0, c1, r1)) = self.bounds() else {
            return Mask::empty(0, 0);
        };
        let mut out = Mask::empty(c1 - c0 + 1, r1 - r0 + 1);
        for (c, r) in self.cells() {
            out.set(c - c0, r - r0, true);
        }
        out
    }

    /// Inclusive bounding box `(min_col, min_row, max_col, max_row)` of set cells.
    pub fn bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let mut it = self.cells();
        let (c, r) = it.next()?;
        let init = (c, r, c, r);
        Some(it.fold(init, |(c0, r0, c1, r1), (c, r)| {
            (c0.min(c), r0.min(r), c1.max(c), r1.max(r))
        }))
    }

    /// Quarter turn counter-clockwise as seen on screen (rows grow downward).
    pub fn rotated_ccw90(&self) -> Mask {
        let mut out = Mask::empty(self.height, self.width);
        for row in 0..out.height {
            for col in 0..out.width {
                out.set(col, row, self.get(self.width - 1 - row, col));
            }
        }
        out
    }

    /// Pixel doubling: each cell becomes a 2x2 block.
    pub fn doubled(&self) -> Mask {
        let mut out = Mask::empty(self.width * 2, self.height * 2);
        for (c, r) in self.cells() {
            for (dc, dr) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                out.set(2 * c + dc, 2 * r + dr, true);
            }
        }
        out
    }

    /// OR-downsampling: each 2x2 block becomes one cell, set if any source cell is set.
    /// Odd dimensions round up.
    pub fn halved(&self) -> Mask {
        let mut out = Mask::empty(self.width.div_ceil(2), self.height.div_ceil(2));
        for (c, r) in self.cells() {
            out.set(c / 2, r / 2, true);
        }
        out
    }

    /// Copies `shape` into a fresh `grid`-sized mask with its top-left at `(col, row)`.
    /// Cells falling outside the grid are dropped.
    pub fn placed(shape: &Mask, grid: GridSpec, col: usize, row: usize) -> Mask {
        let mut out = Mask::for_grid(grid);
        for (c, r) in shape.cells() {
            let (gc, gr) = (col + c, row + r);
            if gc < grid.width && gr < grid.height {
                out.set(gc, gr, true);
            }
        }
        out
    }

    pub fn intersection_count(&self, other: &Mask) -> Result<usize> {
        self.check_dims(other)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a && **b)
            .count())
    }

    pub fn union_count(&self, other: &Mask) -> Result<usize> {
        self.check_dims(other)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a || **b)
            .count())
    }

    /// True when every cell set in `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.same_dims(other) && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mask {}x{}", self.width, self.height)?;
        for row in 0..self.height {
            let line: String = (0..self.width)
                .map(|col| if self.get(col, row) { '#' } else { '.' })
                .collect();
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

/// Intersection over union. Two empty masks count as identical.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    let union = a.union_count(b)?;
    if union == 0 {
        return Ok(1.0);
    }
    let inter = a.intersection_count(b)?;
    Ok(inter as f64 / union as f64)
}

/// `*` + row + `*` per line, newline terminated.
pub fn render_ascii(mask: &Mask) -> String {
    let mut out = String::with_capacity((mask.width + 3) * mask.height);
    for row in 0..mask.height {
        out.push(BORDER);
        for col in 0..mask.width {
            out.push(if mask.get(col, row) {
                SHAPE_CELL
            } else {
                EMPTY_CELL
            });
        }
        out.push(BORDER);
        out.push('\n');
    }
    out
}

pub fn parse_ascii(text: &str) -> Result<Mask> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Err(Error::parse(1, "empty input"));
    }
    let mut rows: Vec<Vec<bool>> = Vec::new();
    for (idx, line) in body.split('\n').enumerate() {
        let line_no = idx + 1;
        let chars: Vec<char> = line.chars().collect();
        if chars.first() != Some(&BORDER) {
            return Err(Error::parse(line_no, "missing left border `*`"));
        }
        if chars.len() < 2 || chars.last() != Some(&BORDER) {
            return Err(Error::parse(line_no, "missing right border `*`"));
        }
        let interior = &chars[1..chars.len() - 1];
        let mut row = Vec::with_capacity(interior.len());
        for (col, ch) in interior.iter().enumerate() {
            match *ch {
                SHAPE_CELL => row.push(true),
                EMPTY_CELL => row.push(false),
                other => {
                    return Err(Error::parse(
                        line_no,
                        format!("unexpected character {other:?} at column {}", col + 2),
                    ))
                }
            }
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(
                    line_no,
                    format!("ragged line: width {} but expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    let height = rows.len();
    let width = rows[0].len();
    Ok(Mask {
        width,
        height,
        bits: rows.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(grid: GridSpec, col: usize, row: usize) -> Mask {
        Mask::placed(&Mask::from_rows(&["##", "##"]), grid, col, row)
    }

    #[test]
    fn empty_mask_renders_border_only() {
        let text = render_ascii(&Mask::empty(4, 2));
        assert_eq!(text, "*    *\n*    *\n");
    }

    #[test]
    fn parses_single_line() {
        let mask = parse_ascii("*##*").unwrap();
        assert_eq!((mask.width(), mask.height()), (2, 1));
        assert!(mask.get(0, 0) && mask.get(1, 0));
    }

    #[test]
    fn missing_left_border_is_line_one() {
        match parse_ascii("#  *") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ragged_and_foreign_characters_rejected() {
        assert!(matches!(
            parse_ascii("*# *\n*#*\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_ascii("*  *\n* x*\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(parse_ascii("*  \n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_ascii(""), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn iou_edge_values() {
        let grid = GridSpec::new(8, 8).unwrap();
        let a = block(grid, 1, 1);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &block(grid, 5, 5)).unwrap(), 0.0);
        // Diagonal offset: one shared cell, 4 + 4 - 1 = 7 in the union.
        let overlap = iou(&a, &block(grid, 2, 2)).unwrap();
        assert_eq!(overlap, 1.0 / 7.0);
        let empty = Mask::for_grid(grid);
        assert_eq!(iou(&empty, &empty).unwrap(), 1.0);
    }

    #[test]
    fn iou_dimension_mismatch() {
        let err = iou(&Mask::empty(8, 8), &Mask::empty(9, 8)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn doubling_and_halving() {
        let m = Mask::from_rows(&["#..", "##.", ".##"]);
        let d = m.doubled();
        assert_eq!(d.population(), 4 * m.population());
        assert_eq!(d.halved(), m);
        // The other direction only grows.
        let hd = m.halved().doubled();
        let padded = Mask::placed(&m, GridSpec { width: hd.width(), height: hd.height() }, 0, 0);
        assert!(padded.is_subset_of(&hd));
    }

    #[test]
    fn quarter_turn_moves_top_right_to_top_left() {
        let m = Mask::from_rows(&["..#", "..."]);
        let r = m.rotated_ccw90();
        assert_eq!((r.width(), r.height()), (2, 3));
        assert!(r.get(0, 0));
        assert_eq!(r.population(), 1);
        assert_eq!(m.rotated_ccw90().rotated_ccw90().rotated_ccw90().rotated_ccw90(), m);
    }

    #[test]
    fn grid_minimum_enforced() {
        assert!(GridSpec::new(7, 8).is_err());
        assert!(GridSpec::new(8, 8).is_ok());
    }
}
