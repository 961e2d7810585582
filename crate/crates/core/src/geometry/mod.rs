//! Shapes on a bounded grid: rasters, the shape library, and the atomic transforms.

mod mask;
pub mod shapes;
mod state;

pub use mask::{iou, parse_ascii, render_ascii, GridSpec, Mask, BORDER, EMPTY_CELL, SHAPE_CELL};
pub use shapes::{ShapeEntry, ShapeLibrary};
pub use state::{
    Board, Direction, Effect, Orientation, Rotation, ScaleExp, Scaling, ShapeState, Transform,
    Transition,
};
