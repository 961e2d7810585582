//! A start/target pair together with its ground-truth plan.

use serde::{Deserialize, Serialize};

use crate::action::ActionLabel;
use crate::error::{Error, Result};
use crate::geometry::{Board, GridSpec, Mask, ScaleExp, ShapeState};
use crate::reward::{derive_quota_plan, QuotaPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub start: ShapeState,
    pub target: ShapeState,
    pub plan: QuotaPlan,
    pub seed: u64,
    pub grid: GridSpec,
    pub start_ascii: String,
    pub target_ascii: String,
}

impl ScenarioSpec {
    /// Builds the scenario, deriving the plan and renders. Only checks that both
    /// states fit; see [`ScenarioSpec::verify`] for the full contract.
    pub fn new(board: &Board, start: ShapeState, target: ShapeState, seed: u64) -> Result<Self> {
        board.validate_state(&start)?;
        board.validate_state(&target)?;
        let plan = derive_quota_plan(&start, &target)?;
        Ok(ScenarioSpec {
            start_ascii: board.render(&start)?,
            target_ascii: board.render(&target)?,
            start,
            target,
            plan,
            seed,
            grid: board.grid(),
        })
    }

    pub fn distance(&self) -> u32 {
        self.plan.distance()
    }

    /// Structural consistency with `board`: grid, containment, stored plan and renders.
    pub fn check_consistency(&self, board: &Board) -> Result<()> {
        if self.grid != board.grid() {
            return Err(Error::Config(format!(
                "scenario grid {}x{} does not match board {}x{}",
                self.grid.width,
                self.grid.height,
                board.grid().width,
                board.grid().height
            )));
        }
        board.validate_state(&self.start)?;
        board.validate_state(&self.target)?;
        let derived = derive_quota_plan(&self.start, &self.target)?;
        if derived != self.plan {
            return Err(Error::Config(format!(
                "stored plan {} differs from derived plan {derived}",
                self.plan
            )));
        }
        if self.start_ascii != board.render(&self.start)?
            || self.target_ascii != board.render(&self.target)?
        {
            return Err(Error::Config("stored renders do not match the states".into()));
        }
        Ok(())
    }

    /// Full contract: consistency, plus every intermediate state of every
    /// quota-respecting ordering stays inside the grid and short of the
    /// success threshold.
    pub fn verify(&self, board: &Board, iou_threshold: f64) -> Result<()> {
        self.check_consistency(board)?;
        if let Some(problem) = path_problem(board, &self.start, &self.target, &self.plan, iou_threshold)? {
            return Err(Error::Config(problem));
        }
        Ok(())
    }
}

/// State reached from `start` after applying the given label counts in any order,
/// assuming nothing clamps. `None` when the footprint would leave the grid.
pub(crate) fn state_after(
    board: &Board,
    start: &ShapeState,
    counts: &[(ActionLabel, u32)],
) -> Result<Option<ShapeState>> {
    let mut steps = start.orientation.index() as i64;
    let mut k = start.scale.exponent() as i64;
    let mut col = start.col as i64;
    let mut row = start.row as i64;
    for &(label, n) in counts {
        let n = n as i64;
        match label {
            ActionLabel::QuarterRotation => steps += 2 * n,
            ActionLabel::SlightRotation => steps += n,
            ActionLabel::DoubleSize => k += n,
            ActionLabel::HalfSize => k -= n,
            ActionLabel::Right => col += n,
            ActionLabel::Left => col -= n,
            ActionLabel::Down => row += n,
            ActionLabel::Up => row -= n,
            ActionLabel::NoRotation | ActionLabel::NoTranslation | ActionLabel::NoScaling => {}
        }
    }
    let Ok(scale) = ScaleExp::new(k as i8) else {
        return Ok(None);
    };
    if col < 0 || row < 0 || !(-1..=1).contains(&k) {
        return Ok(None);
    }
    let state = ShapeState {
        shape: start.shape.clone(),
        orientation: crate::geometry::Orientation::from_index((steps.rem_euclid(8)) as u8),
        scale,
        col: col as usize,
        row: row as usize,
    };
    Ok(board.contains(&state)?.then_some(state))
}

/// Describes the first way the plan fails to be a clean path, if any.
pub(crate) fn path_problem(
    board: &Board,
    start: &ShapeState,
    target: &ShapeState,
    plan: &QuotaPlan,
    iou_threshold: f64,
) -> Result<Option<String>> {
    let labels: Vec<(ActionLabel, u32)> = plan.quotas().iter().map(|(l, n)| (*l, *n)).collect();
    let target_mask: Mask = board.rasterize(target)?;
    let mut counts = vec![0u32; labels.len()];
    loop {
        let partial: Vec<(ActionLabel, u32)> =
            labels.iter().zip(&counts).map(|((l, _), c)| (*l, *c)).collect();
        let is_full = counts.iter().zip(&labels).all(|(c, (_, n))| c == n);
        match state_after(board, start, &partial)? {
            None => {
                return Ok(Some(format!(
                    "intermediate state after {partial:?} leaves the grid"
                )))
            }
            Some(s) if is_full => {
                if &s != target {
                    return Ok(Some("plan does not reach the target".into()));
                }
            }
            Some(s) => {
                let overlap = crate::geometry::iou(&board.rasterize(&s)?, &target_mask)?;
                if overlap >= iou_threshold {
                    return Ok(Some(format!(
                        "state after {partial:?} already overlaps the target (IoU {overlap:.3})"
                    )));
                }
            }
        }
        // Odometer over all sub-multisets.
        let mut i = 0;
        loop {
            if i == counts.len() {
                return Ok(None);
            }
            if counts[i] < labels[i].1 {
                counts[i] += 1;
                break;
            }
            counts[i] = 0;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Orientation;

    fn board() -> Board {
        Board::with_builtin(GridSpec::default()).unwrap()
    }

    fn st(b: &Board, deg: u32, k: i8, col: usize, row: usize) -> ShapeState {
        b.state(
            "chevron",
            Orientation::from_degrees(deg).unwrap(),
            ScaleExp::new(k).unwrap(),
            col,
            row,
        )
        .unwrap()
    }

    #[test]
    fn interior_scenario_verifies() {
        let b = board();
        let sc = ScenarioSpec::new(&b, st(&b, 0, 0, 8, 10), st(&b, 90, 1, 10, 9), 1).unwrap();
        assert_eq!(sc.distance(), 5);
        sc.verify(&b, 0.9).unwrap();
    }

    #[test]
    fn border_hugging_path_fails_verification() {
        let b = board();
        // Doubling at the bottom-right corner only fits after moving left/up first.
        let start = st(&b, 0, 0, 24, 24);
        let target = st(&b, 0, 1, 19, 19);
        let sc = ScenarioSpec::new(&b, start, target, 1).unwrap();
        assert!(sc.verify(&b, 0.9).is_err());
    }

    #[test]
    fn tampered_plan_is_inconsistent() {
        let b = board();
        let mut sc = ScenarioSpec::new(&b, st(&b, 0, 0, 8, 10), st(&b, 0, 0, 9, 10), 1).unwrap();
        sc.plan = QuotaPlan::from_counts([(ActionLabel::Left, 1)]).unwrap();
        assert!(sc.check_consistency(&b).is_err());
    }

    #[test]
    fn grid_mismatch_detected() {
        let b = board();
        let sc = ScenarioSpec::new(&b, st(&b, 0, 0, 1, 1), st(&b, 0, 0, 2, 1), 1).unwrap();
        let small = Board::with_builtin(GridSpec::new(10, 10).unwrap()).unwrap();
        assert!(sc.check_consistency(&small).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let b = board();
        let sc = ScenarioSpec::new(&b, st(&b, 45, -1, 3, 4), st(&b, 180, 0, 6, 2), 9).unwrap();
        let json = serde_json::to_string(&sc).unwrap();
        let back: ScenarioSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, sc);
        back.check_consistency(&b).unwrap();
    }
}
