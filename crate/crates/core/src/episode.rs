//! The closed-loop episode: observation, action, transition, reward, repeat.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::action::{parse_answer, ActionLabel, AnswerError};
use crate::error::{Error, Result};
use crate::geometry::{iou, Board, Effect, GridSpec, Mask, ShapeState, Transform};
use crate::prompt::build_prompt;
use crate::reward::{episode_total, Reward, RewardProfile, RewardTracker};
use crate::scenario::ScenarioSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// The current shape is re-rendered after every action.
    Dynamic,
    /// The current shape always shows the initial state; only the history grows.
    Static,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dynamic" => Ok(Mode::Dynamic),
            "static" => Ok(Mode::Static),
            other => Err(Error::Usage(format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Dynamic => "dynamic",
            Mode::Static => "static",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub horizon: u32,
    pub iou_threshold: f64,
    pub mode: Mode,
    pub grid: GridSpec,
    pub reward_profile: RewardProfile,
}

impl EpisodeConfig {
    pub const MAX_HORIZON: u32 = 64;

    pub fn validate(&self) -> Result<()> {
        if !(1..=Self::MAX_HORIZON).contains(&self.horizon) {
            return Err(Error::Config(format!(
                "horizon {} outside [1, {}]",
                self.horizon,
                Self::MAX_HORIZON
            )));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "IoU threshold {} outside (0, 1]",
                self.iou_threshold
            )));
        }
        self.grid.validate()?;
        self.reward_profile.validate()
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            horizon: 5,
            iou_threshold: 0.9,
            mode: Mode::Dynamic,
            grid: GridSpec::default(),
            reward_profile: RewardProfile::figure2(),
        }
    }
}

/// What the agent sees before choosing the action for step `step_index`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub target_ascii: String,
    pub current_ascii: String,
    /// Prior actions; `None` marks a step whose output did not parse.
    pub history: Vec<Option<ActionLabel>>,
    pub step_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum Outcome {
    Success,
    HorizonExhausted,
    AgentError(String),
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success)
    }
}

/// One executed step. The observation is only present in freshly recorded
/// episodes; traces on disk keep its hash instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u32,
    #[serde(skip)]
    pub observation: Option<Observation>,
    pub prompt_sha256: String,
    pub raw_text: String,
    pub action: Option<ActionLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_error: Option<AnswerError>,
    /// Step reward as a float, excluding any success bonus.
    pub reward: f64,
    pub reward_exact: Reward,
    pub effect: Effect,
    pub iou: f64,
    pub state_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub scenario: ScenarioSpec,
    pub config: EpisodeConfig,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub outcome: Outcome,
    /// Sum of step rewards plus the success bonus when applicable.
    pub total_reward: Reward,
}

impl EpisodeRecord {
    pub fn total(&self) -> f64 {
        self.total_reward.to_f64()
    }

    /// Total without the success bonus.
    pub fn total_without_bonus(&self) -> f64 {
        self.step_rewards().into_iter().sum::<Reward>().to_f64()
    }

    pub fn step_rewards(&self) -> Vec<Reward> {
        self.steps.iter().map(|s| s.reward_exact).collect()
    }

    /// Recomputes the total from the step list.
    pub fn recomputed_total(&self) -> Reward {
        episode_total(
            &self.step_rewards(),
            self.outcome.is_success(),
            &self.config.reward_profile,
        )
    }
}

/// Result of a single [`Episode::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// Next observation, absent once the episode is over.
    pub observation: Option<Observation>,
    /// Step reward including the success bonus on the winning step.
    pub reward: Reward,
    pub done: bool,
    pub outcome: Option<Outcome>,
    pub iou: f64,
    pub action: Result<ActionLabel, AnswerError>,
}

pub fn prompt_sha256(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// A live episode. Single-threaded; drive it with `step` until `is_done`.
#[derive(Debug, Clone)]
pub struct Episode {
    board: Board,
    scenario: ScenarioSpec,
    config: EpisodeConfig,
    seed: u64,
    state: ShapeState,
    target_mask: Mask,
    history: Vec<Option<ActionLabel>>,
    tracker: RewardTracker,
    steps: Vec<StepRecord>,
    outcome: Option<Outcome>,
    last_iou: f64,
}

impl Episode {
    pub fn reset(
        board: &Board,
        scenario: ScenarioSpec,
        config: EpisodeConfig,
        seed: u64,
    ) -> Result<(Episode, Observation)> {
        config.validate()?;
        if config.grid != board.grid() {
            return Err(Error::Config("episode grid does not match the board".into()));
        }
        scenario.check_consistency(board)?;
        let target_mask = board.rasterize(&scenario.target)?;
        let start_iou = iou(&board.rasterize(&scenario.start)?, &target_mask)?;
        let tracker = RewardTracker::new(scenario.plan.clone(), config.reward_profile.clone());
        let outcome = (start_iou >= config.iou_threshold).then_some(Outcome::Success);
        let episode = Episode {
            board: board.clone(),
            state: scenario.start.clone(),
            scenario,
            config,
            seed,
            target_mask,
            history: Vec::new(),
            tracker,
            steps: Vec::new(),
            outcome,
            last_iou: start_iou,
        };
        let obs = episode.observation()?;
        Ok((episode, obs))
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn scenario(&self) -> &ScenarioSpec {
        &self.scenario
    }

    pub fn board(&self) -> &Board {
        &self.board
    }

    /// The true current state (not shown to agents in static mode).
    pub fn state(&self) -> &ShapeState {
        &self.state
    }

    pub fn history(&self) -> &[Option<ActionLabel>] {
        &self.history
    }

    pub fn tracker(&self) -> &RewardTracker {
        &self.tracker
    }

    pub fn is_done(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.outcome.as_ref()
    }

    pub fn steps_taken(&self) -> u32 {
        self.steps.len() as u32
    }

    pub fn current_iou(&self) -> f64 {
        self.last_iou
    }

    pub fn observation(&self) -> Result<Observation> {
        let shown = match self.config.mode {
            Mode::Dynamic => self.board.render(&self.state)?,
            Mode::Static => self.scenario.start_ascii.clone(),
        };
        Ok(Observation {
            target_ascii: self.scenario.target_ascii.clone(),
            current_ascii: shown,
            history: self.history.clone(),
            step_index: self.steps.len() as u32 + 1,
        })
    }

    pub fn prompt(&self) -> Result<String> {
        Ok(build_prompt(&self.observation()?, self.config.mode))
    }

    /// Steps with a well-formed label.
    pub fn step(&mut self, action: ActionLabel) -> Result<StepResult> {
        self.step_text(&action.as_answer())
    }

    /// Parses raw agent output and steps. Unparseable output is a no-op step
    /// scored as an invalid action.
    pub fn step_text(&mut self, raw_text: &str) -> Result<StepResult> {
        let parsed = parse_answer(raw_text);
        self.step_parsed(raw_text, parsed)
    }

    pub fn step_parsed(
        &mut self,
        raw_text: &str,
        parsed: std::result::Result<ActionLabel, AnswerError>,
    ) -> Result<StepResult> {
        if self.is_done() {
            return Err(Error::Usage("step after the episode ended".into()));
        }
        let observation = self.observation()?;
        let prompt = build_prompt(&observation, self.config.mode);
        let action = parsed.as_ref().ok().copied();
        let transform = action.map_or(Transform::Identity, ActionLabel::transform);
        let transition = self.board.apply(&self.state, transform)?;
        let reward = self.tracker.score(action);

        self.state = transition.state;
        self.history.push(action);
        let t = self.steps.len() as u32 + 1;
        let overlap = iou(&self.board.rasterize(&self.state)?, &self.target_mask)?;
        self.last_iou = overlap;

        let outcome = if overlap >= self.config.iou_threshold {
            Some(Outcome::Success)
        } else if t >= self.config.horizon {
            Some(Outcome::HorizonExhausted)
        } else {
            None
        };
        self.steps.push(StepRecord {
            t,
            observation: Some(observation),
            prompt_sha256: prompt_sha256(&prompt),
            raw_text: raw_text.to_string(),
            action,
            answer_error: parsed.as_ref().err().cloned(),
            reward: reward.to_f64(),
            reward_exact: reward,
            effect: if action.is_some() { transition.effect } else { Effect::NoOp },
            iou: overlap,
            state_digest: self.state.digest(),
        });
        self.outcome = outcome.clone();

        let paid = if outcome.as_ref().is_some_and(Outcome::is_success) {
            reward + self.config.reward_profile.success_bonus()
        } else {
            reward
        };
        Ok(StepResult {
            observation: if outcome.is_none() {
                Some(self.observation()?)
            } else {
                None
            },
            reward: paid,
            done: outcome.is_some(),
            outcome,
            iou: overlap,
            action: parsed,
        })
    }

    /// Ends the episode because the agent could not be reached.
    pub fn abort(&mut self, reason: impl Into<String>) {
        if self.outcome.is_none() {
            self.outcome = Some(Outcome::AgentError(reason.into()));
        }
    }

    pub fn into_record(self) -> EpisodeRecord {
        let outcome = self.outcome.unwrap_or(Outcome::HorizonExhausted);
        let rewards: Vec<Reward> = self.steps.iter().map(|s| s.reward_exact).collect();
        let total_reward = episode_total(&rewards, outcome.is_success(), &self.config.reward_profile);
        EpisodeRecord {
            scenario: self.scenario,
            config: self.config,
            seed: self.seed,
            steps: self.steps,
            outcome,
            total_reward,
        }
    }
}

fn mismatch(step: usize, detail: impl Into<String>) -> Error {
    Error::ReplayMismatch {
        step,
        detail: detail.into(),
    }
}

/// Re-executes the recorded agent outputs and checks every step matches.
pub fn replay(record: &EpisodeRecord, board: &Board) -> Result<EpisodeRecord> {
    let (mut episode, _) = Episode::reset(
        board,
        record.scenario.clone(),
        record.config.clone(),
        record.seed,
    )?;
    for (i, recorded) in record.steps.iter().enumerate() {
        let t = i + 1;
        if episode.is_done() {
            return Err(mismatch(t, "episode ended before the recorded steps ran out"));
        }
        episode.step_text(&recorded.raw_text)?;
        let fresh = episode.steps.last().expect("step recorded");
        if recorded.t != fresh.t {
            return Err(mismatch(t, format!("step index {} vs {}", recorded.t, fresh.t)));
        }
        if let Some(obs) = &recorded.observation {
            if fresh.observation.as_ref() != Some(obs) {
                return Err(mismatch(t, "observation differs"));
            }
        }
        if recorded.prompt_sha256 != fresh.prompt_sha256 {
            return Err(mismatch(t, "prompt hash differs"));
        }
        if recorded.action != fresh.action {
            return Err(mismatch(
                t,
                format!("action {:?} vs {:?}", recorded.action, fresh.action),
            ));
        }
        if recorded.reward_exact != fresh.reward_exact || recorded.reward.to_bits() != fresh.reward.to_bits() {
            return Err(mismatch(
                t,
                format!("reward {} vs {}", recorded.reward_exact, fresh.reward_exact),
            ));
        }
        if recorded.state_digest != fresh.state_digest {
            return Err(mismatch(t, "state digest differs"));
        }
        if recorded.effect != fresh.effect || recorded.iou.to_bits() != fresh.iou.to_bits() {
            return Err(mismatch(t, "transition differs"));
        }
    }
    if let Outcome::AgentError(reason) = &record.outcome {
        episode.abort(reason.clone());
    }
    let fresh = episode.into_record();
    let end = record.steps.len() + 1;
    if fresh.outcome != record.outcome {
        return Err(mismatch(
            end,
            format!("outcome {:?} vs {:?}", record.outcome, fresh.outcome),
        ));
    }
    if fresh.total_reward != record.total_reward {
        return Err(mismatch(
            end,
            format!("total {} vs {}", record.total_reward, fresh.total_reward),
        ));
    }
    Ok(fresh)
}

/// Provenance written at the top of every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub tool: String,
    pub version: String,
    #[serde(default)]
    pub run_config: serde_json::Value,
}

impl ArtifactHeader {
    pub fn new(run_config: serde_json::Value) -> Self {
        ArtifactHeader {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            run_config,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TraceLine {
    Header {
        #[serde(flatten)]
        header: ArtifactHeader,
        scenario: ScenarioSpec,
        config: EpisodeConfig,
        seed: u64,
        reward_profile: String,
    },
    Step(StepRecord),
    Summary {
        outcome: Outcome,
        total_reward: f64,
        total_reward_exact: Reward,
    },
}

/// Writes a JSON-lines trace: header, one line per step, summary.
pub fn write_trace<W: Write>(record: &EpisodeRecord, header: &ArtifactHeader, mut out: W) -> Result<()> {
    let head = TraceLine::Header {
        header: header.clone(),
        scenario: record.scenario.clone(),
        config: record.config.clone(),
        seed: record.seed,
        reward_profile: record.config.reward_profile.name.clone(),
    };
    serde_json::to_writer(&mut out, &head)?;
    out.write_all(b"\n")?;
    for step in &record.steps {
        serde_json::to_writer(&mut out, &TraceLine::Step(step.clone()))?;
        out.write_all(b"\n")?;
    }
    let summary = TraceLine::Summary {
        outcome: record.outcome.clone(),
        total_reward: record.total(),
        total_reward_exact: record.total_reward,
    };
    serde_json::to_writer(&mut out, &summary)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Reads a trace back into a record (without observations).
pub fn read_trace<R: BufRead>(input: R) -> Result<(ArtifactHeader, EpisodeRecord)> {
    let mut header = None;
    let mut steps = Vec::new();
    let mut summary = None;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TraceLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(i + 1, format!("trace: {e}")))?;
        match parsed {
            TraceLine::Header {
                header: h,
                scenario,
                config,
                seed,
                ..
            } => header = Some((h, scenario, config, seed)),
            TraceLine::Step(s) => steps.push(s),
            TraceLine::Summary {
                outcome,
                total_reward_exact,
                ..
            } => summary = Some((outcome, total_reward_exact)),
        }
    }
    let (h, scenario, config, seed) =
        header.ok_or_else(|| Error::parse(1, "trace has no header line"))?;
    let (outcome, total_reward) =
        summary.ok_or_else(|| Error::parse(steps.len() + 2, "trace has no summary line"))?;
    Ok((
        h,
        EpisodeRecord {
            scenario,
            config,
            seed,
            steps,
            outcome,
            total_reward,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Orientation, ScaleExp};
    use crate::prompt::STATIC_TEMPLATE;

    fn board() -> Board {
        Board::with_builtin(GridSpec::default()).unwrap()
    }

    fn scenario(b: &Board, start: (u32, i8, usize, usize), target: (u32, i8, usize, usize)) -> ScenarioSpec {
        let mk = |(d, k, c, r): (u32, i8, usize, usize)| {
            b.state("chevron", Orientation::from_degrees(d).unwrap(), ScaleExp::new(k).unwrap(), c, r)
                .unwrap()
        };
        ScenarioSpec::new(b, mk(start), mk(target), 0).unwrap()
    }

    #[test]
    fn identical_start_and_target_succeeds_immediately() {
        let b = board();
        let sc = scenario(&b, (0, 0, 5, 5), (0, 0, 5, 5));
        let (ep, obs) = Episode::reset(&b, sc, EpisodeConfig::default(), 0).unwrap();
        assert!(ep.is_done());
        assert_eq!(obs.step_index, 1);
        let rec = ep.into_record();
        assert_eq!(rec.outcome, Outcome::Success);
        assert!(rec.steps.is_empty());
        assert_eq!(rec.total(), 2.0);
    }

    #[test]
    fn one_step_task() {
        let b = board();
        let sc = scenario(&b, (0, 0, 5, 5), (0, 0, 6, 5));
        let (mut ep, obs) = Episode::reset(&b, sc.clone(), EpisodeConfig::default(), 0).unwrap();
        assert_eq!(obs.current_ascii, sc.start_ascii);
        let r = ep.step(ActionLabel::Right).unwrap();
        assert!(r.done);
        assert_eq!(r.outcome, Some(Outcome::Success));
        assert_eq!(r.reward, Reward::new(29, 10));
        assert!(ep.step(ActionLabel::Right).is_err());
        let rec = ep.into_record();
        assert_eq!(rec.steps.len(), 1);
        assert_eq!(rec.total_reward, Reward::new(29, 10));
    }

    #[test]
    fn noop_label_keeps_state_and_advances_time() {
        let b = board();
        let sc = scenario(&b, (0, 0, 5, 5), (90, 0, 8, 5));
        let (mut ep, _) = Episode::reset(&b, sc, EpisodeConfig::default(), 0).unwrap();
        let before = ep.state().digest();
        let r = ep.step(ActionLabel::NoRotation).unwrap();
        assert_eq!(ep.state().digest(), before);
        assert_eq!(r.observation.unwrap().step_index, 2);
        assert_eq!(r.reward, Reward::new(-1, 10));
    }

    #[test]
    fn horizon_exhausts_after_five_misses() {
        let b = board();
        let sc = scenario(&b, (0, 0, 5, 5), (90, 0, 8, 5));
        let (mut ep, _) = Episode::reset(&b, sc, EpisodeConfig::default(), 0).unwrap();
        for i in 0..5 {
            assert!(!ep.is_done(), "ended early at {i}");
            ep.step_text("no idea").unwrap();
        }
        let rec = ep.into_record();
        assert_eq!(rec.outcome, Outcome::HorizonExhausted);
        assert_eq!(rec.total_reward, Reward::new(-5, 10));
        assert!(rec.steps.iter().all(|s| s.answer_error == Some(AnswerError::NoAnswer)));
    }

    #[test]
    fn static_mode_keeps_initial_render() {
        let b = board();
        let sc = scenario(&b, (0, 0, 5, 5), (90, 1, 8, 4));
        let config = EpisodeConfig::default().with_mode(Mode::Static);
        let (mut ep, first) = Episode::reset(&b, sc.clone(), config, 0).unwrap();
        assert_eq!(first.current_ascii, sc.start_ascii);
        for label in [ActionLabel::DoubleSize, ActionLabel::Right, ActionLabel::QuarterRotation] {
            let obs = ep.step(label).unwrap().observation.unwrap();
            assert_eq!(obs.current_ascii, sc.start_ascii);
        }
        let prompt = ep.prompt().unwrap();
        assert!(prompt.contains("HISTORY OF ACTIONS: [double_size, right, quarter_rotation]"));
        assert!(prompt.starts_with(STATIC_TEMPLATE.split("{analyzed}").next().unwrap()));
    }

    #[test]
    fn dynamic_mode_shows_the_moved_shape() {
        let b = board();
        let sc = scenario(&b, (0, 0, 5, 5), (0, 0, 8, 5));
        let (mut ep, _) = Episode::reset(&b, sc, EpisodeConfig::default(), 0).unwrap();
        let obs = ep.step(ActionLabel::Right).unwrap().observation.unwrap();
        assert_eq!(obs.current_ascii, b.render(ep.state()).unwrap());
        assert_eq!(obs.history, vec![Some(ActionLabel::Right)]);
        assert!(ep.prompt().unwrap().contains("You have already analyzed: right\n"));
    }

    #[test]
    fn config_bounds() {
        let mut c = EpisodeConfig { horizon: 0, ..Default::default() };
        assert!(c.validate().is_err());
        c.horizon = 65;
        assert!(c.validate().is_err());
        c.horizon = 5;
        c.iou_threshold = 0.0;
        assert!(c.validate().is_err());
        c.iou_threshold = 1.0;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn replay_detects_tampering_and_trace_round_trips() {
        let b = board();
        let sc = scenario(&b, (0, 0, 5, 5), (90, 0, 7, 5));
        let (mut ep, _) = Episode::reset(&b, sc, EpisodeConfig::default(), 3).unwrap();
        ep.step_text("<answer>right</answer>").unwrap();
        ep.step_text("garbage").unwrap();
        ep.step(ActionLabel::QuarterRotation).unwrap();
        ep.step(ActionLabel::Right).unwrap();
        let rec = ep.into_record();
        assert_eq!(rec.outcome, Outcome::Success);
        assert_eq!(replay(&rec, &b).unwrap(), rec);

        let mut bad = rec.clone();
        bad.steps[1].reward_exact = Reward::new(1, 10);
        bad.steps[1].reward = 0.1;
        match replay(&bad, &b) {
            Err(Error::ReplayMismatch { step, .. }) => assert_eq!(step, 2),
            other => panic!("expected mismatch, got {other:?}"),
        }

        let mut buf = Vec::new();
        write_trace(&rec, &ArtifactHeader::new(serde_json::Value::Null), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), rec.steps.len() + 2);
        let first_step: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
        for key in ["t", "prompt_sha256", "raw_text", "action", "reward", "state_digest"] {
            assert!(first_step.get(key).is_some(), "missing {key}");
        }
        let (_, loaded) = read_trace(buf.as_slice()).unwrap();
        let replayed = replay(&loaded, &b).unwrap();
        assert_eq!(replayed.total_reward, rec.total_reward);
    }
}
