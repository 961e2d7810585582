//! The same scripted actions in both observation modes. Dynamic prompts
//! re-render the current shape; static prompts keep the start and list history.
//!
//! ```bash
//! cargo run --example static_vs_dynamic
//! ```

use shapeshift::action::ActionLabel;
use shapeshift::agent::{run_episode, ScriptedAgent};
use shapeshift::episode::{EpisodeConfig, Mode};
use shapeshift::generator::{gen_scenario, ScenarioConfig};
use shapeshift::geometry::{Board, GridSpec};
use shapeshift::prompt::build_prompt;

fn main() -> shapeshift::Result<()> {
    let board = Board::with_builtin(GridSpec::default())?;
    let scenario = gen_scenario(&board, 3, &ScenarioConfig::default())?;
    let script = [ActionLabel::Up, ActionLabel::SlightRotation];

    for mode in [Mode::Dynamic, Mode::Static] {
        let config = EpisodeConfig::default().with_mode(mode);
        let mut agent = ScriptedAgent::from_labels(&script);
        let record = run_episode(&board, scenario.clone(), config, &mut agent, 0, Default::default())?;
        let third = record.steps[2].observation.as_ref().expect("fresh record");
        println!("===== {mode} prompt before step 3 =====");
        print!("{}", build_prompt(third, mode));
        println!("rewards: {:?}\n", record.steps.iter().map(|s| s.reward).collect::<Vec<_>>());
    }
    Ok(())
}
