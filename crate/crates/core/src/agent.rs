//! Policies that turn a prompt into answer text, and the loop that drives them.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use rand::seq::IndexedRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{parse_answer, ActionLabel, ActionType, AnswerError};
use crate::episode::{Episode, EpisodeConfig, EpisodeRecord, Mode, Observation};
use crate::error::{Error, Result};
use crate::generator::{derive_seed, rng_for};
use crate::geometry::{Board, ShapeState};
use crate::reward::{derive_quota_plan, QuotaPlan};
use crate::scenario::ScenarioSpec;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

/// Sampling temperature suggested to model-backed agents, linear over the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub start: f64,
    pub end: f64,
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        TemperatureSchedule { start: 1.4, end: 0.7 }
    }
}

impl TemperatureSchedule {
    /// Temperature for 1-based `step` of `horizon`.
    pub fn at(&self, step: u32, horizon: u32) -> f64 {
        if horizon <= 1 {
            return self.start;
        }
        let frac = (step.clamp(1, horizon) - 1) as f64 / (horizon - 1) as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Everything an agent may look at for one step.
///
/// `state` and `target` are the true simulator states; only privileged
/// baselines read them.
#[derive(Debug, Clone)]
pub struct AgentContext<'a> {
    pub episode_id: u64,
    pub step: u32,
    pub prompt: &'a str,
    pub observation: &'a Observation,
    pub mode: Mode,
    pub temperature_hint: f64,
    pub state: &'a ShapeState,
    pub target: &'a ShapeState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentReply {
    Text(String),
    /// No reply in time; scored like output without an answer tag.
    Timeout,
}

pub trait Agent: Send {
    fn name(&self) -> String;

    /// Called before the first step of every episode.
    fn begin_episode(&mut self, _episode_id: u64) -> Result<()> {
        Ok(())
    }

    /// `Err` means the agent cannot continue; the episode ends with an agent error.
    fn act(&mut self, ctx: &AgentContext<'_>) -> Result<AgentReply>;
}

/// Uniform over a label set, reseeded per episode from `(seed, episode_id)`.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    seed: u64,
    labels: Vec<ActionLabel>,
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64, labels: Vec<ActionLabel>) -> Self {
        RandomAgent {
            seed,
            labels,
            rng: rng_for(seed),
        }
    }

    pub fn effective(seed: u64) -> Self {
        Self::new(seed, ActionLabel::EFFECTIVE.to_vec())
    }

    pub fn full(seed: u64) -> Self {
        Self::new(seed, ActionLabel::ALL.to_vec())
    }

    pub fn labels(&self) -> &[ActionLabel] {
        &self.labels
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> String {
        format!("random:seed={},space={}", self.seed, self.labels.len())
    }

    fn begin_episode(&mut self, episode_id: u64) -> Result<()> {
        self.rng = rng_for(derive_seed(self.seed, episode_id));
        Ok(())
    }

    fn act(&mut self, _ctx: &AgentContext<'_>) -> Result<AgentReply> {
        let label = self
            .labels
            .choose(&mut self.rng)
            .ok_or_else(|| Error::Agent("random agent has no labels".into()))?;
        Ok(AgentReply::Text(label.as_answer()))
    }
}

/// Privileged baseline that reads the true state and follows the remaining plan.
///
/// It picks the least recently used action type that still has work left
/// (never-used types in the order scale, translation, rotation), then the
/// label of that type with the most remaining quota.
#[derive(Debug, Clone, Default)]
pub struct GreedyOracleAgent {
    last_used: Vec<(ActionType, u32)>,
}

impl GreedyOracleAgent {
    pub fn new() -> Self {
        Self::default()
    }

    const TIE_ORDER: [ActionType; 3] = [ActionType::Scaling, ActionType::Translation, ActionType::Rotation];

    pub fn choose(&self, remaining: &QuotaPlan) -> Option<ActionLabel> {
        let last = |ty: ActionType| {
            self.last_used
                .iter()
                .find(|(t, _)| *t == ty)
                .map_or(0, |(_, step)| *step)
        };
        let ty = Self::TIE_ORDER
            .into_iter()
            .filter(|ty| remaining.type_total(*ty) > 0)
            .min_by_key(|ty| last(*ty))?;
        ty.effective_labels()
            .iter()
            .copied()
            .max_by_key(|l| (remaining.quota(*l), std::cmp::Reverse(*l)))
    }
}

impl Agent for GreedyOracleAgent {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn begin_episode(&mut self, _episode_id: u64) -> Result<()> {
        self.last_used.clear();
        Ok(())
    }

    fn act(&mut self, ctx: &AgentContext<'_>) -> Result<AgentReply> {
        let remaining = derive_quota_plan(ctx.state, ctx.target)?;
        let Some(label) = self.choose(&remaining) else {
            return Ok(AgentReply::Text(ActionLabel::NoTranslation.as_answer()));
        };
        let ty = label.action_type();
        self.last_used.retain(|(t, _)| *t != ty);
        self.last_used.push((ty, ctx.step));
        Ok(AgentReply::Text(label.as_answer()))
    }
}

/// Replays fixed outputs; entries that are labels are wrapped in answer tags.
/// Once the script runs out it answers with empty text.
#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    script: Vec<String>,
    cursor: usize,
}

impl ScriptedAgent {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedAgent {
            script: entries.into_iter().map(Into::into).collect(),
            cursor: 0,
        }
    }

    pub fn from_labels(labels: &[ActionLabel]) -> Self {
        Self::new(labels.iter().map(|l| l.as_answer()))
    }
}

impl Agent for ScriptedAgent {
    fn name(&self) -> String {
        format!("scripted:{}", self.script.join(","))
    }

    fn begin_episode(&mut self, _episode_id: u64) -> Result<()> {
        self.cursor = 0;
        Ok(())
    }

    fn act(&mut self, _ctx: &AgentContext<'_>) -> Result<AgentReply> {
        let entry = self.script.get(self.cursor).cloned().unwrap_or_default();
        self.cursor += 1;
        let text = match entry.trim().parse::<ActionLabel>() {
            Ok(label) => label.as_answer(),
            Err(_) => entry,
        };
        Ok(AgentReply::Text(text))
    }
}

/// One line of the external agent protocol, sent by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRequest {
    pub episode_id: u64,
    pub step: u32,
    pub prompt: String,
    pub mode: Mode,
    pub temperature_hint: f64,
}

/// One line of the external agent protocol, sent by the agent.
/// `step`, when present, must echo the request; stale replies are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<u32>,
}

type Line = std::io::Result<String>;

fn spawn_line_reader<R: std::io::Read + Send + 'static>(reader: R) -> Receiver<Line> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(reader).lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });
    rx
}

/// Line-delimited JSON over some byte channel, with a reply deadline.
struct LineChannel {
    writer: Box<dyn Write + Send>,
    replies: Receiver<Line>,
    timeout: Duration,
    label: String,
}

impl LineChannel {
    fn exchange(&mut self, request: &AgentRequest) -> Result<AgentReply> {
        let fail = |what: String| Error::Agent(format!("{}: {what}", self.label));
        let mut line = serde_json::to_string(request)?;
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| fail(format!("send failed: {e}")))?;
        let deadline = std::time::Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(std::time::Instant::now());
            match self.replies.recv_timeout(left) {
                Ok(Ok(text)) => {
                    if text.trim().is_empty() {
                        continue;
                    }
                    let reply: AgentResponse = serde_json::from_str(&text)
                        .map_err(|e| fail(format!("malformed reply `{text}`: {e}")))?;
                    let stale = reply.step.is_some_and(|s| s != request.step)
                        || reply.episode_id.is_some_and(|e| e != request.episode_id);
                    if !stale {
                        return Ok(AgentReply::Text(reply.text));
                    }
                }
                Ok(Err(e)) => return Err(fail(format!("read failed: {e}"))),
                Err(RecvTimeoutError::Timeout) => return Ok(AgentReply::Timeout),
                Err(RecvTimeoutError::Disconnected) => return Err(fail("channel closed".into())),
            }
        }
    }
}

fn request_for(ctx: &AgentContext<'_>) -> AgentRequest {
    AgentRequest {
        episode_id: ctx.episode_id,
        step: ctx.step,
        prompt: ctx.prompt.to_string(),
        mode: ctx.mode,
        temperature_hint: ctx.temperature_hint,
    }
}

/// A child process speaking the agent protocol on stdin/stdout.
pub struct CommandAgent {
    command: String,
    child: Child,
    channel: LineChannel,
}

impl CommandAgent {
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Agent(format!("cannot start `{command}`: {e}")))?;
        let stdin: ChildStdin = child.stdin.take().expect("piped");
        let stdout = child.stdout.take().expect("piped");
        Ok(CommandAgent {
            command: command.to_string(),
            channel: LineChannel {
                writer: Box::new(stdin),
                replies: spawn_line_reader(stdout),
                timeout,
                label: format!("agent `{command}`"),
            },
            child,
        })
    }
}

impl Agent for CommandAgent {
    fn name(&self) -> String {
        format!("cmd:{}", self.command)
    }

    fn act(&mut self, ctx: &AgentContext<'_>) -> Result<AgentReply> {
        self.channel.exchange(&request_for(ctx))
    }
}

impl Drop for CommandAgent {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A TCP peer speaking the agent protocol.
pub struct TcpAgent {
    address: String,
    channel: LineChannel,
}

impl TcpAgent {
    pub fn connect(address: &str, timeout: Duration) -> Result<Self> {
        let stream = TcpStream::connect(address)
            .map_err(|e| Error::Agent(format!("cannot connect to {address}: {e}")))?;
        let reader = stream.try_clone()?;
        Ok(TcpAgent {
            address: address.to_string(),
            channel: LineChannel {
                writer: Box::new(stream),
                replies: spawn_line_reader(reader),
                timeout,
                label: format!("agent at {address}"),
            },
        })
    }
}

impl Agent for TcpAgent {
    fn name(&self) -> String {
        format!("tcp:{}", self.address)
    }

    fn act(&mut self, ctx: &AgentContext<'_>) -> Result<AgentReply> {
        self.channel.exchange(&request_for(ctx))
    }
}

/// Textual agent selector: `random[:seed=N][,space=8|11]`, `oracle`,
/// `scripted:a,b,...`, `cmd:<shell command>`, `tcp:<host>:<port>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentSpec {
    Random { seed: u64, full_space: bool },
    Oracle,
    Scripted(Vec<String>),
    Command(String),
    Tcp(String),
}

impl FromStr for AgentSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "random" => {
                let mut seed = 0;
                let mut full_space = false;
                for opt in rest.split(',').filter(|o| !o.is_empty()) {
                    let (k, v) = opt
                        .split_once('=')
                        .ok_or_else(|| Error::Usage(format!("random agent option `{opt}` needs a value")))?;
                    match k {
                        "seed" => {
                            seed = v
                                .parse()
                                .map_err(|_| Error::Usage(format!("bad seed `{v}`")))?
                        }
                        "space" => {
                            full_space = match v {
                                "8" => false,
                                "11" => true,
                                _ => return Err(Error::Usage(format!("action space must be 8 or 11, got `{v}`"))),
                            }
                        }
                        _ => return Err(Error::Usage(format!("unknown random agent option `{k}`"))),
                    }
                }
                Ok(AgentSpec::Random { seed, full_space })
            }
            "oracle" if rest.is_empty() => Ok(AgentSpec::Oracle),
            "scripted" => Ok(AgentSpec::Scripted(
                rest.split(',').map(str::trim).filter(|e| !e.is_empty()).map(String::from).collect(),
            )),
            "cmd" if !rest.is_empty() => Ok(AgentSpec::Command(rest.to_string())),
            "tcp" if rest.contains(':') => Ok(AgentSpec::Tcp(rest.to_string())),
            _ => Err(Error::Usage(format!("unrecognised agent `{s}`"))),
        }
    }
}

impl AgentSpec {
    pub fn build(&self, timeout: Duration) -> Result<Box<dyn Agent>> {
        Ok(match self {
            AgentSpec::Random { seed, full_space: false } => Box::new(RandomAgent::effective(*seed)),
            AgentSpec::Random { seed, full_space: true } => Box::new(RandomAgent::full(*seed)),
            AgentSpec::Oracle => Box::new(GreedyOracleAgent::new()),
            AgentSpec::Scripted(entries) => Box::new(ScriptedAgent::new(entries.clone())),
            AgentSpec::Command(cmd) => Box::new(CommandAgent::spawn(cmd, timeout)?),
            AgentSpec::Tcp(addr) => Box::new(TcpAgent::connect(addr, timeout)?),
        })
    }

    /// Whether independent copies can run episodes in parallel.
    pub fn is_local(&self) -> bool {
        !matches!(self, AgentSpec::Command(_) | AgentSpec::Tcp(_))
    }
}

/// Runs one episode to completion with `agent`.
pub fn run_episode(
    board: &Board,
    scenario: ScenarioSpec,
    config: EpisodeConfig,
    agent: &mut dyn Agent,
    episode_id: u64,
    temperature: TemperatureSchedule,
) -> Result<EpisodeRecord> {
    let seed = scenario.seed;
    let (mut episode, mut observation) = Episode::reset(board, scenario, config, seed)?;
    if let Err(e) = agent.begin_episode(episode_id) {
        episode.abort(e.to_string());
    }
    while !episode.is_done() {
        let step = episode.steps_taken() + 1;
        let prompt = crate::prompt::build_prompt(&observation, episode.config().mode);
        let ctx = AgentContext {
            episode_id,
            step,
            prompt: &prompt,
            observation: &observation,
            mode: episode.config().mode,
            temperature_hint: temperature.at(step, episode.config().horizon),
            state: episode.state(),
            target: &episode.scenario().target,
        };
        let reply = agent.act(&ctx);
        let result = match reply {
            Ok(AgentReply::Text(text)) => {
                let parsed: std::result::Result<ActionLabel, AnswerError> = parse_answer(&text);
                episode.step_parsed(&text, parsed)?
            }
            Ok(AgentReply::Timeout) => episode.step_parsed("", Err(AnswerError::NoAnswer))?,
            Err(e) => {
                episode.abort(e.to_string());
                break;
            }
        };
        if let Some(next) = result.observation {
            observation = next;
        }
    }
    Ok(episode.into_record())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::Outcome;
    use crate::geometry::{GridSpec, Orientation, ScaleExp};
    use crate::reward::{max_reward, Reward};

    fn board() -> Board {
        Board::with_builtin(GridSpec::default()).unwrap()
    }

    fn scenario(b: &Board) -> ScenarioSpec {
        let start = b.state("chevron", Orientation::ZERO, ScaleExp::BASE, 8, 10).unwrap();
        let target = b
            .state("chevron", Orientation::from_degrees(90).unwrap(), ScaleExp::MAX, 10, 9)
            .unwrap();
        ScenarioSpec::new(b, start, target, 3).unwrap()
    }

    #[test]
    fn temperature_is_linear() {
        let t = TemperatureSchedule::default();
        assert_eq!(t.at(1, 5), 1.4);
        assert!((t.at(5, 5) - 0.7).abs() < 1e-12);
        assert!((t.at(3, 5) - 1.05).abs() < 1e-12);
        assert_eq!(t.at(1, 1), 1.4);
    }

    #[test]
    fn agent_specs_parse() {
        assert_eq!(
            "random:seed=7".parse::<AgentSpec>().unwrap(),
            AgentSpec::Random { seed: 7, full_space: false }
        );
        assert_eq!(
            "random:seed=1,space=11".parse::<AgentSpec>().unwrap(),
            AgentSpec::Random { seed: 1, full_space: true }
        );
        assert_eq!("random".parse::<AgentSpec>().unwrap(), AgentSpec::Random { seed: 0, full_space: false });
        assert_eq!("oracle".parse::<AgentSpec>().unwrap(), AgentSpec::Oracle);
        assert_eq!(
            "scripted:up, down".parse::<AgentSpec>().unwrap(),
            AgentSpec::Scripted(vec!["up".into(), "down".into()])
        );
        assert_eq!(
            "cmd:python3 a.py --x".parse::<AgentSpec>().unwrap(),
            AgentSpec::Command("python3 a.py --x".into())
        );
        assert_eq!("tcp:127.0.0.1:9".parse::<AgentSpec>().unwrap(), AgentSpec::Tcp("127.0.0.1:9".into()));
        for bad in ["", "rnd", "random:seed", "random:space=9", "tcp:nohost", "cmd:", "oracle:x"] {
            assert!(bad.parse::<AgentSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn oracle_collects_the_maximum() {
        let b = board();
        let sc = scenario(&b);
        let config = EpisodeConfig::default();
        let best = max_reward(&sc.plan, &config.reward_profile, config.horizon).unwrap()
            + config.reward_profile.success_bonus();
        let rec = run_episode(&b, sc, config, &mut GreedyOracleAgent::new(), 0, Default::default()).unwrap();
        assert_eq!(rec.outcome, Outcome::Success);
        assert_eq!(rec.total_reward, best);
        assert_eq!(rec.total_reward, Reward::new(47, 10));
    }

    #[test]
    fn oracle_alternates_types() {
        let b = board();
        let rec = run_episode(&b, scenario(&b), EpisodeConfig::default(), &mut GreedyOracleAgent::new(), 0, Default::default())
            .unwrap();
        let types: Vec<_> = rec.steps.iter().map(|s| s.action.unwrap().action_type()).collect();
        assert_eq!(
            types,
            vec![
                ActionType::Scaling,
                ActionType::Translation,
                ActionType::Rotation,
                ActionType::Translation,
                ActionType::Translation
            ]
        );
    }

    #[test]
    fn scripted_agent_runs_out_into_no_answer() {
        let b = board();
        let mut agent = ScriptedAgent::new(["up", "garbage"]);
        let rec = run_episode(&b, scenario(&b), EpisodeConfig::default(), &mut agent, 0, Default::default()).unwrap();
        assert_eq!(rec.steps.len(), 5);
        assert_eq!(rec.steps[0].action, Some(ActionLabel::Up));
        assert_eq!(rec.steps[1].answer_error, Some(AnswerError::NoAnswer));
        assert_eq!(rec.steps[4].raw_text, "");
        assert_eq!(rec.outcome, Outcome::HorizonExhausted);
    }

    #[test]
    fn random_agent_is_reproducible_per_episode() {
        let b = board();
        let run = |id| {
            let mut a = RandomAgent::effective(7);
            run_episode(&b, scenario(&b), EpisodeConfig::default(), &mut a, id, Default::default()).unwrap()
        };
        assert_eq!(run(4), run(4));
        let mut shared = RandomAgent::effective(7);
        run_episode(&b, scenario(&b), EpisodeConfig::default(), &mut shared, 1, Default::default()).unwrap();
        let second = run_episode(&b, scenario(&b), EpisodeConfig::default(), &mut shared, 4, Default::default()).unwrap();
        assert_eq!(second, run(4));
    }

    struct Failing;
    impl Agent for Failing {
        fn name(&self) -> String {
            "failing".into()
        }
        fn act(&mut self, ctx: &AgentContext<'_>) -> Result<AgentReply> {
            if ctx.step == 2 {
                Err(Error::Agent("boom".into()))
            } else {
                Ok(AgentReply::Timeout)
            }
        }
    }

    #[test]
    fn agent_failure_ends_the_episode() {
        let b = board();
        let rec = run_episode(&b, scenario(&b), EpisodeConfig::default(), &mut Failing, 0, Default::default()).unwrap();
        assert_eq!(rec.steps.len(), 1);
        assert_eq!(rec.steps[0].answer_error, Some(AnswerError::NoAnswer));
        assert!(matches!(rec.outcome, Outcome::AgentError(ref m) if m.contains("boom")));
    }

    #[test]
    fn command_agent_round_trip_and_timeout() {
        let b = board();
        let echo = r#"while read line; do echo '{"text":"<answer>up</answer>"}'; done"#;
        let mut agent = CommandAgent::spawn(echo, Duration::from_secs(10)).unwrap();
        let rec = run_episode(&b, scenario(&b), EpisodeConfig::default(), &mut agent, 0, Default::default()).unwrap();
        assert!(rec.steps.iter().all(|s| s.action == Some(ActionLabel::Up)));

        let mut silent = CommandAgent::spawn("sleep 30", Duration::from_millis(50)).unwrap();
        let config = EpisodeConfig { horizon: 2, ..Default::default() };
        let rec = run_episode(&b, scenario(&b), config, &mut silent, 0, Default::default()).unwrap();
        assert_eq!(rec.steps.len(), 2);
        assert!(rec.steps.iter().all(|s| s.answer_error == Some(AnswerError::NoAnswer)));

        let mut dead = CommandAgent::spawn("true", Duration::from_secs(5)).unwrap();
        let rec = run_episode(&b, scenario(&b), EpisodeConfig::default(), &mut dead, 0, Default::default()).unwrap();
        assert!(matches!(rec.outcome, Outcome::AgentError(_)));
    }
}
