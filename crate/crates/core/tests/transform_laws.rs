use proptest::prelude::*;

use shapeshift::geometry::{
    Board, Direction, Effect, GridSpec, Orientation, Rotation, ScaleExp, Scaling, ShapeLibrary, ShapeState, Transform,
};

mod common;

fn shape_ids() -> Vec<String> {
    ShapeLibrary::builtin().shape_ids().map(String::from).collect()
}

/// States whose anchor leaves room for every footprint in the library.
fn interior_state(board: &Board) -> impl Strategy<Value = ShapeState> {
    let (w, h) = board.library().max_extent();
    let g = board.grid();
    (
        proptest::sample::select(shape_ids()),
        0u8..8,
        -1i8..=1,
        0..=g.width - w,
        0..=g.height - h,
    )
        .prop_map(|(shape, o, k, col, row)| ShapeState {
            shape,
            orientation: Orientation::from_index(o),
            scale: ScaleExp::new(k).unwrap(),
            col,
            row,
        })
}

fn apply_n(board: &Board, s: &ShapeState, t: Transform, n: usize) -> ShapeState {
    let mut cur = s.clone();
    for _ in 0..n {
        let tr = board.apply(&cur, t).unwrap();
        assert_eq!(tr.effect, Effect::Applied);
        cur = tr.state;
    }
    cur
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn rotations_close_up(s in interior_state(&common::board())) {
        let b = common::board();
        prop_assert_eq!(apply_n(&b, &s, Transform::Rotate(Rotation::Deg90), 4), s.clone());
        prop_assert_eq!(apply_n(&b, &s, Transform::Rotate(Rotation::Deg45), 8), s.clone());
        prop_assert_eq!(apply_n(&b, &s, Transform::Rotate(Rotation::Deg180), 2), s.clone());
        let twice = apply_n(&b, &s, Transform::Rotate(Rotation::Deg45), 2);
        prop_assert_eq!(twice, apply_n(&b, &s, Transform::Rotate(Rotation::Deg90), 1));
    }

    #[test]
    fn half_undoes_double(s in interior_state(&common::board())) {
        let b = common::board();
        let base = ShapeState { scale: ScaleExp::BASE, ..s };
        let up = apply_n(&b, &base, Transform::Scale(Scaling::Double), 1);
        prop_assert_eq!(apply_n(&b, &up, Transform::Scale(Scaling::Half), 1), base.clone());
        let lib = b.library();
        let doubled = lib.mask(&base.shape, base.orientation, ScaleExp::MAX).unwrap();
        prop_assert_eq!(&doubled.halved(), lib.mask(&base.shape, base.orientation, ScaleExp::BASE).unwrap());
    }

    #[test]
    fn translations_invert_away_from_borders(s in interior_state(&common::board()), d in 0usize..4) {
        let b = common::board();
        let g = b.grid();
        let (w, h) = b.library().max_extent();
        let s = ShapeState { col: s.col.clamp(1, g.width - w - 1), row: s.row.clamp(1, g.height - h - 1), ..s };
        let dir = [Direction::Up, Direction::Down, Direction::Left, Direction::Right][d];
        let moved = apply_n(&b, &s, Transform::Translate(dir), 1);
        prop_assert_ne!(&moved, &s);
        prop_assert_eq!(apply_n(&b, &moved, Transform::Translate(dir.opposite()), 1), s);
    }

    #[test]
    fn clamped_moves_keep_the_state(shape in proptest::sample::select(shape_ids()), o in 0u8..8, k in -1i8..=1, along in 0usize..100) {
        let b = common::board();
        let orientation = Orientation::from_index(o);
        let scale = ScaleExp::new(k).unwrap();
        let (cols, rows) = b.anchor_range(&shape, orientation, scale).unwrap();
        let cases = [
            (Direction::Left, 0, along % rows),
            (Direction::Up, along % cols, 0),
            (Direction::Right, cols - 1, along % rows),
            (Direction::Down, along % cols, rows - 1),
        ];
        for (dir, col, row) in cases {
            let s = ShapeState { shape: shape.clone(), orientation, scale, col, row };
            let t = b.translate(&s, dir).unwrap();
            prop_assert_eq!(t.effect, Effect::Clamped);
            prop_assert_eq!(t.state, s);
        }
    }

    #[test]
    fn transitions_always_stay_inside(s in interior_state(&common::board()), col in 0usize..27, row in 0usize..27, label in 0usize..11) {
        let b = common::board();
        let (cols, rows) = b.anchor_range(&s.shape, s.orientation, s.scale).unwrap();
        let s = ShapeState { col: col % cols, row: row % rows, ..s };
        let l = shapeshift::action::ActionLabel::ALL[label];
        let t = b.apply(&s, l.transform()).unwrap();
        prop_assert!(b.contains(&t.state).unwrap());
    }
}

#[test]
fn every_library_mask_obeys_mask_laws() {
    let lib = ShapeLibrary::builtin();
    for id in lib.shape_ids() {
        for (_, _, m) in lib.entry(id).unwrap().masks() {
            let four = m.rotated_ccw90().rotated_ccw90().rotated_ccw90().rotated_ccw90();
            assert_eq!(&four, m);
            assert_eq!(&m.doubled().halved(), m);
        }
    }
}

#[test]
fn repair_shifts_minimally_at_the_far_corner() {
    let b = Board::with_builtin(GridSpec::default()).unwrap();
    let s = b.state("chevron", Orientation::ZERO, ScaleExp::BASE, 24, 24).unwrap();
    let t = b.scale(&s, Scaling::Double).unwrap();
    assert_eq!(t.effect, Effect::Repaired);
    assert_eq!((t.state.col, t.state.row), (21, 21));
}
