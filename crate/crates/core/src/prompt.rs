//! Prompt assembly. The instruction templates are stored verbatim as text
//! assets; only the `{analyzed}` slot and the two shape blocks vary.

use crate::action::ActionLabel;
use crate::episode::{Mode, Observation};

pub const DYNAMIC_TEMPLATE: &str = include_str!("../assets/prompts/dynamic.txt");
pub const STATIC_TEMPLATE: &str = include_str!("../assets/prompts/static.txt");
/// The reference layout of the two shape blocks.
pub const SAMPLE_ENVIRONMENT: &str = include_str!("../assets/prompts/sample_environment.txt");

pub const HISTORY_SLOT: &str = "{analyzed}";
pub const TARGET_HEADER: &str = "TARGET (Shape A):";
pub const CURRENT_HEADER: &str = "CURRENT (Shape B):";
pub const SEPARATOR: &str = "------------------------------";
/// Shown in the history for a step whose output did not parse.
pub const INVALID_HISTORY_ENTRY: &str = "invalid";

pub fn template(mode: Mode) -> &'static str {
    match mode {
        Mode::Dynamic => DYNAMIC_TEMPLATE,
        Mode::Static => STATIC_TEMPLATE,
    }
}

/// Comma-separated history labels, as substituted into the template slot.
pub fn render_history(history: &[Option<ActionLabel>]) -> String {
    history
        .iter()
        .map(|h| h.map_or(INVALID_HISTORY_ENTRY, ActionLabel::as_str))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn system_prompt(mode: Mode, history: &[Option<ActionLabel>]) -> String {
    template(mode).replace(HISTORY_SLOT, &render_history(history))
}

/// Target and current renders in the sample-environment layout.
pub fn environment_block(target_ascii: &str, current_ascii: &str) -> String {
    let mut out = String::with_capacity(target_ascii.len() + current_ascii.len() + 80);
    out.push_str(TARGET_HEADER);
    out.push('\n');
    out.push_str(target_ascii);
    out.push_str(CURRENT_HEADER);
    out.push('\n');
    out.push_str(current_ascii);
    out.push_str(SEPARATOR);
    out.push('\n');
    out
}

pub fn build_prompt(observation: &Observation, mode: Mode) -> String {
    let mut prompt = system_prompt(mode, &observation.history);
    prompt.push_str(&environment_block(
        &observation.target_ascii,
        &observation.current_ascii,
    ));
    prompt
}
