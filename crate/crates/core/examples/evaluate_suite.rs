//! Oracle and random agents over a generated suite, in both modes.
//!
//! ```bash
//! cargo run --release --example evaluate_suite -- 100
//! ```

use shapeshift::agent::AgentSpec;
use shapeshift::analytics::evaluate;
use shapeshift::episode::{EpisodeConfig, Mode};
use shapeshift::generator::{gen_suite, ScenarioConfig};
use shapeshift::geometry::{Board, GridSpec};

fn main() -> shapeshift::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let board = Board::with_builtin(GridSpec::default())?;
    let suite = gen_suite(&board, 0, n, &ScenarioConfig::default())?;

    for spec in [AgentSpec::Oracle, AgentSpec::Random { seed: 1, full_space: false }] {
        for mode in [Mode::Dynamic, Mode::Static] {
            let config = EpisodeConfig::default().with_mode(mode);
            let ev = evaluate(&board, &suite, &config, &spec, &Default::default())?;
            println!("{}", ev.report.render_text(true));
        }
    }
    Ok(())
}
