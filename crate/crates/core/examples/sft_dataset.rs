//! Generates a small single-action dataset and prints one sample in each
//! export format.
//!
//! ```bash
//! cargo run --example sft_dataset -- 24
//! ```

use std::collections::BTreeMap;

use shapeshift::generator::{gen_dataset, write_dataset, DatasetConfig, ExportFormat};
use shapeshift::geometry::{Board, GridSpec};

fn main() -> shapeshift::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(24);
    let board = Board::with_builtin(GridSpec::default())?;
    let samples = gen_dataset(&board, &DatasetConfig { n, seed: 5, ..Default::default() })?;

    let mut per_label = BTreeMap::new();
    for s in &samples {
        s.verify()?;
        *per_label.entry(s.label.as_str()).or_insert(0) += 1;
    }
    println!("{n} samples: {per_label:?}\n");
    println!("{}{}\n", samples[0].prompt, samples[0].completion);

    for format in [ExportFormat::Completion, ExportFormat::Chat] {
        let mut line = Vec::new();
        write_dataset(&samples[..1], format, &mut line)?;
        println!("{format:?}: {} bytes per line", line.len());
    }
    Ok(())
}
