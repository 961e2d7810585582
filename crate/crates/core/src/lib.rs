pub mod action;
pub mod agent;
pub mod analytics;
pub mod cli;
pub mod episode;
pub mod error;
pub mod generator;
pub mod geometry;
pub mod prompt;
pub mod reward;
pub mod scenario;
pub mod session;

pub use error::{Error, Result};
