//! Prints every library shape in all orientations and scales, then shows
//! the atomic transforms acting on a chevron.
//!
//! ```bash
//! cargo run --example shape_gallery
//! cargo run --example shape_gallery -- --export assets/shapes
//! ```

use std::path::PathBuf;

use shapeshift::geometry::{
    render_ascii, Board, Direction, GridSpec, Orientation, Rotation, ScaleExp, Scaling,
    ShapeLibrary,
};

fn main() -> shapeshift::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let library = ShapeLibrary::builtin();

    if let Some(pos) = args.iter().position(|a| a == "--export") {
        let dir = PathBuf::from(args.get(pos + 1).map(String::as_str).unwrap_or("shapes"));
        let n = library.export_dir(&dir)?;
        println!("wrote {n} golden masks to {}", dir.display());
        return Ok(());
    }

    for id in library.shape_ids() {
        println!("== {id}");
        for scale in ScaleExp::all() {
            for o in Orientation::all() {
                let mask = library.mask(id, o, scale)?;
                println!("-- {} deg, scale 2^{}", o.degrees(), scale.exponent());
                print!("{}", render_ascii(mask));
            }
        }
    }

    let board = Board::with_builtin(GridSpec::new(12, 12)?)?;
    let s0 = board.state("chevron", Orientation::ZERO, ScaleExp::BASE, 2, 2)?;
    let steps = [
        ("start", s0.clone()),
        ("right", board.translate(&s0, Direction::Right)?.state),
        ("quarter", board.rotate(&s0, Rotation::Deg90)?.state),
        ("slight", board.rotate(&s0, Rotation::Deg45)?.state),
        ("double", board.scale(&s0, Scaling::Double)?.state),
    ];
    for (name, state) in steps {
        println!("== {name}: {state}");
        print!("{}", board.render(&state)?);
    }
    Ok(())
}
