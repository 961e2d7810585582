//! Drives one episode step by step with the greedy oracle, printing each
//! prompt's environment block, the action, and the reward.
//!
//! ```bash
//! cargo run --example closed_loop_episode -- 7
//! ```

use shapeshift::agent::{Agent, AgentContext, AgentReply, GreedyOracleAgent};
use shapeshift::episode::{Episode, EpisodeConfig};
use shapeshift::generator::{gen_scenario, QuotaPattern, ScenarioConfig};
use shapeshift::geometry::{Board, GridSpec};
use shapeshift::prompt::{build_prompt, environment_block};

fn main() -> shapeshift::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let board = Board::with_builtin(GridSpec::default())?;
    let scenario = gen_scenario(
        &board,
        seed,
        &ScenarioConfig {
            pattern: Some(QuotaPattern::mixed_five()),
            ..Default::default()
        },
    )?;
    println!("start  {}\ntarget {}\nplan   {}\n", scenario.start, scenario.target, scenario.plan);

    let config = EpisodeConfig::default();
    let (mut episode, mut obs) = Episode::reset(&board, scenario, config, seed)?;
    let mut agent = GreedyOracleAgent::new();
    agent.begin_episode(0)?;

    while !episode.is_done() {
        let prompt = build_prompt(&obs, episode.config().mode);
        print!("{}", environment_block(&obs.target_ascii, &obs.current_ascii));
        let ctx = AgentContext {
            episode_id: 0,
            step: obs.step_index,
            prompt: &prompt,
            observation: &obs,
            mode: episode.config().mode,
            temperature_hint: 0.0,
            state: episode.state(),
            target: &episode.scenario().target,
        };
        let AgentReply::Text(text) = agent.act(&ctx)? else {
            unreachable!("the oracle always answers")
        };
        let step = ctx.step;
        let result = episode.step_text(&text)?;
        println!("step {step} -> {text}  reward {}  IoU {:.3}\n", result.reward, result.iou);
        if let Some(next) = result.observation {
            obs = next;
        }
    }
    let record = episode.into_record();
    println!("{:?}: total {} ({:.3})", record.outcome, record.total_reward, record.total());
    Ok(())
}
