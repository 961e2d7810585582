//! Precomputed shape masks for every (orientation, scale) pair.
//!
//! Runtime rotation and scaling never resample a raster: they look masks up
//! here. The table is produced once by [`author_entry`], which is the only
//! place where a 45 degree raster rotation happens. Every quarter turn of a
//! table entry is exact, so the eight orientations form a clean cycle.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use super::mask::{parse_ascii, render_ascii, Mask};
use super::state::{Orientation, ScaleExp};
use crate::error::{Error, Result};

pub const CHEVRON: &str = "chevron";
pub const L_SHAPE: &str = "l_shape";
pub const T_SHAPE: &str = "t_shape";

/// Largest footprint side any library mask may have; matches the smallest grid.
pub const MAX_MASK_SIDE: usize = 8;

/// The 24 masks of one shape, indexed by orientation then scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeEntry {
    masks: Vec<Mask>,
}

impl ShapeEntry {
    fn slot(orientation: Orientation, scale: ScaleExp) -> usize {
        orientation.index() as usize * 3 + (scale.exponent() + 1) as usize
    }

    pub fn mask(&self, orientation: Orientation, scale: ScaleExp) -> &Mask {
        &self.masks[Self::slot(orientation, scale)]
    }

    pub fn masks(&self) -> impl Iterator<Item = (Orientation, ScaleExp, &Mask)> {
        Orientation::all().flat_map(move |o| {
            ScaleExp::all().map(move |s| (o, s, self.mask(o, s)))
        })
    }

    /// Checks the structural guarantees the transforms depend on.
    pub fn validate(&self, id: &str) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("shape `{id}`: {msg}")));
        if self.masks.len() != 24 {
            return bad(format!("expected 24 masks, found {}", self.masks.len()));
        }
        for (o, s, m) in self.masks() {
            if m.is_empty() {
                return bad(format!("empty mask at {}/{}", o.degrees(), s.exponent()));
            }
            if m.width() > MAX_MASK_SIDE || m.height() > MAX_MASK_SIDE {
                return bad(format!(
                    "mask at {}/{} is {}x{}, larger than {MAX_MASK_SIDE}",
                    o.degrees(),
                    s.exponent(),
                    m.width(),
                    m.height()
                ));
            }
            if &m.trimmed() != m {
                return bad(format!("mask at {}/{} is not tight", o.degrees(), s.exponent()));
            }
            if self.mask(o.rotated(2), s) != &m.rotated_ccw90() {
                return bad(format!(
                    "orientation {} is not a quarter turn of {} at scale {}",
                    o.rotated(2).degrees(),
                    o.degrees(),
                    s.exponent()
                ));
            }
        }
        for o in Orientation::all() {
            let base = self.mask(o, ScaleExp::BASE);
            if self.mask(o, ScaleExp::MAX) != &base.doubled() {
                return bad(format!("doubled mask mismatch at {}", o.degrees()));
            }
        }
        for o in [Orientation::ZERO, Orientation::from_index(1)] {
            let base = self.mask(o, ScaleExp::BASE);
            if self.mask(o, ScaleExp::MIN) != &base.halved() {
                return bad(format!("halved mask mismatch at {}", o.degrees()));
            }
        }
        Ok(())
    }
}

/// Shape id to precomputed masks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ShapeLibrary {
    entries: BTreeMap<String, ShapeEntry>,
}

impl ShapeLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Chevron, L and T shapes, authored once and shared.
    pub fn builtin() -> Arc<ShapeLibrary> {
        static LIB: OnceLock<Arc<ShapeLibrary>> = OnceLock::new();
        LIB.get_or_init(|| {
            let mut lib = ShapeLibrary::new();
            for (id, rows) in builtin_bases() {
                lib.insert(id, author_entry(&Mask::from_rows(rows)))
                    .expect("builtin shapes are valid");
            }
            Arc::new(lib)
        })
        .clone()
    }

    pub fn insert(&mut self, id: &str, entry: ShapeEntry) -> Result<()> {
        if id.is_empty() || id.contains(['/', '\\']) {
            return Err(Error::Config(format!("invalid shape id `{id}`")));
        }
        entry.validate(id)?;
        self.entries.insert(id.to_string(), entry);
        Ok(())
    }

    pub fn entry(&self, id: &str) -> Result<&ShapeEntry> {
        self.entries
            .get(id)
            .ok_or_else(|| Error::UnknownShape(id.to_string()))
    }

    pub fn mask(&self, id: &str, orientation: Orientation, scale: ScaleExp) -> Result<&Mask> {
        Ok(self.entry(id)?.mask(orientation, scale))
    }

    pub fn shape_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    /// Largest footprint over all masks, `(width, height)`.
    pub fn max_extent(&self) -> (usize, usize) {
        self.entries
            .values()
            .flat_map(|e| e.masks.iter())
            .fold((0, 0), |(w, h), m| (w.max(m.width()), h.max(m.height())))
    }

    /// Writes `<dir>/<shape_id>/<orientation>_<scale>.txt` for every mask.
    pub fn export_dir(&self, dir: &Path) -> Result<usize> {
        let mut written = 0;
        for (id, entry) in &self.entries {
            let shape_dir = dir.join(id);
            fs::create_dir_all(&shape_dir)?;
            for (o, s, mask) in entry.masks() {
                fs::write(shape_dir.join(golden_file_name(o, s)), render_ascii(mask))?;
                written += 1;
            }
        }
        Ok(written)
    }

    /// Loads a library from the layout written by [`ShapeLibrary::export_dir`].
    pub fn load_dir(dir: &Path) -> Result<ShapeLibrary> {
        let mut lib = ShapeLibrary::new();
        let mut ids: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        ids.sort();
        for id in ids {
            let mut masks = Vec::with_capacity(24);
            for o in Orientation::all() {
                for s in ScaleExp::all() {
                    let path = dir.join(&id).join(golden_file_name(o, s));
                    let text = fs::read_to_string(&path).map_err(|e| {
                        Error::Config(format!("{}: {e}", path.display()))
                    })?;
                    masks.push(parse_ascii(&text)?);
                }
            }
            lib.insert(&id, ShapeEntry { masks })?;
        }
        if lib.entries.is_empty() {
            return Err(Error::Config(format!("no shapes found in {}", dir.display())));
        }
        Ok(lib)
    }
}

pub fn golden_file_name(orientation: Orientation, scale: ScaleExp) -> String {
    format!("{}_{}.txt", orientation.degrees(), scale.exponent())
}

fn builtin_bases() -> [(&'static str, &'static [&'static str]); 3] {
    [
        (CHEVRON, &["#..", "##.", ".##"]),
        (L_SHAPE, &["#..", "#..", "###"]),
        (T_SHAPE, &["###", ".#.", ".#."]),
    ]
}

/// Builds the full orientation/scale table from one base mask.
///
/// Orientation 45 comes from [`rotate_45_nearest`]; every other orientation is
/// an exact quarter turn of 0 or 45. Half-size masks are OR-downsampled for 0
/// and 45 and then quarter-turned, which keeps populations equal across the
/// axis-aligned orientations.
pub fn author_entry(base: &Mask) -> ShapeEntry {
    let base = base.trimmed();
    let diag = rotate_45_nearest(&base);
    let mut by_orientation: Vec<[Mask; 2]> = Vec::with_capacity(8);
    by_orientation.push([base.clone(), base.halved()]);
    by_orientation.push([diag.clone(), diag.halved()]);
    for i in 2..8 {
        let [full, half] = &by_orientation[i - 2];
        let next = [full.rotated_ccw90(), half.rotated_ccw90()];
        by_orientation.push(next);
    }
    let mut masks = Vec::with_capacity(24);
    for [full, half] in by_orientation {
        let doubled = full.doubled();
        masks.push(half);
        masks.push(full);
        masks.push(doubled);
    }
    ShapeEntry { masks }
}

/// Nearest-neighbour 45 degree counter-clockwise rotation about the centroid.
///
/// Each destination cell samples the source at its inverse-rotated centre,
/// rounding half up. Only the largest 8-connected component is kept.
pub fn rotate_45_nearest(mask: &Mask) -> Mask {
    let cells: Vec<(usize, usize)> = mask.cells().collect();
    if cells.is_empty() {
        return Mask::empty(0, 0);
    }
    let n = cells.len() as f64;
    let cx = cells.iter().map(|c| c.0 as f64).sum::<f64>() / n;
    let cy = cells.iter().map(|c| c.1 as f64).sum::<f64>() / n;
    let (sin, cos) = std::f64::consts::FRAC_PI_4.sin_cos();

    let reach = (mask.width() + mask.height()) as i64;
    let side = (2 * reach) as usize;
    let mut hits = Mask::empty(side, side);
    for r in -reach..reach {
        for c in -reach..reach {
            // Screen rows grow downward, so flip y to rotate in the usual sense.
            let x = c as f64 - cx;
            let y = -(r as f64 - cy);
            let xs = x * cos + y * sin;
            let ys = -x * sin + y * cos;
            let sc = (xs + cx + 0.5).floor();
            let sr = (-ys + cy + 0.5).floor();
            if sc >= 0.0 && sr >= 0.0 && mask.get(sc as usize, sr as usize) {
                hits.set((c + reach) as usize, (r + reach) as usize, true);
            }
        }
    }
    largest_component(&hits).trimmed()
}

fn largest_component(mask: &Mask) -> Mask {
    let mut seen = Mask::empty(mask.width(), mask.height());
    let mut best: Vec<(usize, usize)> = Vec::new();
    for start in mask.cells() {
        if seen.get(start.0, start.1) {
            continue;
        }
        seen.set(start.0, start.1, true);
        let mut stack = vec![start];
        let mut component = Vec::new();
        while let Some((c, r)) = stack.pop() {
            component.push((c, r));
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nc, nr) = (c as i64 + dc, r as i64 + dr);
                    if nc < 0 || nr < 0 {
                        continue;
                    }
                    let (nc, nr) = (nc as usize, nr as usize);
                    if mask.get(nc, nr) && !seen.get(nc, nr) {
                        seen.set(nc, nr, true);
                        stack.push((nc, nr));
                    }
                }
            }
        }
        if component.len() > best.len() {
            best = component;
        }
    }
    let mut out = Mask::empty(mask.width(), mask.height());
    for (c, r) in best {
        out.set(c, r, true);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_library_is_complete() {
        let lib = ShapeLibrary::builtin();
        let ids: Vec<_> = lib.shape_ids().collect();
        assert_eq!(ids, vec![CHEVRON, L_SHAPE, T_SHAPE]);
        for id in ids {
            let entry = lib.entry(id).unwrap();
            entry.validate(id).unwrap();
            assert_eq!(entry.masks().count(), 24);
        }
        assert!(lib.max_extent().0 <= MAX_MASK_SIDE && lib.max_extent().1 <= MAX_MASK_SIDE);
    }

    #[test]
    fn axis_orientations_share_population() {
        let lib = ShapeLibrary::builtin();
        for id in lib.shape_ids() {
            for s in ScaleExp::all() {
                let pops: Vec<_> = [0, 2, 4, 6]
                    .iter()
                    .map(|&i| lib.mask(id, Orientation::from_index(i), s).unwrap().population())
                    .collect();
                assert!(pops.windows(2).all(|w| w[0] == w[1]), "{id} {pops:?}");
            }
        }
    }

    #[test]
    fn base_scale_orientations_are_distinct() {
        // Needed so that every rotation label changes what the agent sees.
        let lib = ShapeLibrary::builtin();
        for id in lib.shape_ids() {
            let masks: Vec<_> = Orientation::all()
                .map(|o| lib.mask(id, o, ScaleExp::BASE).unwrap().clone())
                .collect();
            for i in 0..masks.len() {
                for j in i + 1..masks.len() {
                    assert_ne!(masks[i], masks[j], "{id}: {i} vs {j}");
                }
            }
        }
    }

    #[test]
    fn chevron_diagonal_matches_authored_layout() {
        let lib = ShapeLibrary::builtin();
        let diag = lib.mask(CHEVRON, Orientation::from_index(1), ScaleExp::BASE).unwrap();
        assert_eq!(diag, &Mask::from_rows(&["####", ".#.."]));
    }

    #[test]
    fn unknown_shape_is_reported() {
        let lib = ShapeLibrary::builtin();
        assert!(matches!(
            lib.mask("hexagon", Orientation::ZERO, ScaleExp::BASE),
            Err(Error::UnknownShape(_))
        ));
    }

    #[test]
    fn export_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let lib = ShapeLibrary::builtin();
        assert_eq!(lib.export_dir(dir.path()).unwrap(), 72);
        assert!(dir.path().join("chevron").join("45_-1.txt").exists());
        let loaded = ShapeLibrary::load_dir(dir.path()).unwrap();
        assert_eq!(&loaded, lib.as_ref());
    }

    #[test]
    fn committed_golden_files_match_authoring() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/shapes");
        let loaded = ShapeLibrary::load_dir(&dir).unwrap();
        assert_eq!(&loaded, ShapeLibrary::builtin().as_ref());
    }

    #[test]
    fn tampered_entry_fails_validation() {
        let mut entry = author_entry(&Mask::from_rows(&["#..", "##.", ".##"]));
        entry.masks[4] = Mask::from_rows(&["##"]);
        assert!(entry.validate("x").is_err());
    }
}
