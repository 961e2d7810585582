//! Evaluates a child process speaking the agent wire protocol. The default
//! command is a shell loop that always answers `up`; pass your own as the
//! first argument.
//!
//! ```bash
//! cargo run --example external_agent
//! cargo run --example external_agent -- "python3 my_agent.py"
//! ```

use std::time::Duration;

use shapeshift::agent::CommandAgent;
use shapeshift::analytics::{evaluate_with, EvalOptions};
use shapeshift::episode::EpisodeConfig;
use shapeshift::generator::{gen_suite, ScenarioConfig};
use shapeshift::geometry::{Board, GridSpec};

const ALWAYS_UP: &str = r#"while read -r line; do echo '{"text": "<answer>up</answer>"}'; done"#;

fn main() -> shapeshift::Result<()> {
    let command = std::env::args().nth(1).unwrap_or_else(|| ALWAYS_UP.to_string());
    let board = Board::with_builtin(GridSpec::default())?;
    let suite = gen_suite(&board, 0, 10, &ScenarioConfig::default())?;
    let mut agent = CommandAgent::spawn(&command, Duration::from_secs(30))?;
    let ev = evaluate_with(&board, &suite, &EpisodeConfig::default(), &mut agent, &EvalOptions::default())?;
    print!("{}", ev.report.render_text(false));
    Ok(())
}
