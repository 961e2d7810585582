//! Client-driven episodes over line-delimited JSON: the client sends
//! `reset`/`step` requests and receives prompts and rewards.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, ToSocketAddrs};
use std::thread;

use serde::{Deserialize, Serialize};

use crate::episode::{Episode, EpisodeConfig, Mode, Outcome};
use crate::error::{Error, Result};
use crate::generator::{gen_scenario, ScenarioConfig};
use crate::geometry::Board;
use crate::reward::Reward;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Reset,
    Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRequest {
    pub op: Op,
    #[serde(default)]
    pub scenario_seed: Option<u64>,
    #[serde(default)]
    pub mode: Option<String>,
    /// Raw agent output for `step`, parsed exactly like a native episode.
    #[serde(default)]
    pub action: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub iou: f64,
    pub step: u32,
    pub outcome: Option<Outcome>,
    pub reward_exact: Reward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResponse {
    /// Next prompt, or `None` once the episode is over.
    pub prompt: Option<String>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionErrorKind {
    /// Malformed line or unknown field values.
    BadRequest,
    /// Step without an active episode.
    Protocol,
    /// Scenario generation or engine failure.
    Engine,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionError {
    pub kind: SessionErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SessionReply {
    Ok(SessionResponse),
    Err { error: SessionError },
}

fn err(kind: SessionErrorKind, message: impl Into<String>) -> SessionReply {
    SessionReply::Err {
        error: SessionError {
            kind,
            message: message.into(),
        },
    }
}

/// One client's state: at most one live episode.
#[derive(Debug, Clone)]
pub struct Session {
    board: Board,
    scenario_config: ScenarioConfig,
    episode_config: EpisodeConfig,
    default_seed: u64,
    episode: Option<Episode>,
}

impl Session {
    pub fn new(board: Board, scenario_config: ScenarioConfig, episode_config: EpisodeConfig, default_seed: u64) -> Self {
        Session {
            board,
            scenario_config,
            episode_config,
            default_seed,
            episode: None,
        }
    }

    pub fn handle_line(&mut self, line: &str) -> SessionReply {
        match serde_json::from_str::<SessionRequest>(line) {
            Ok(req) => self.handle(&req),
            Err(e) => err(SessionErrorKind::BadRequest, e.to_string()),
        }
    }

    pub fn handle(&mut self, req: &SessionRequest) -> SessionReply {
        match req.op {
            Op::Reset => self.reset(req),
            Op::Step => self.step(req),
        }
    }

    fn reset(&mut self, req: &SessionRequest) -> SessionReply {
        if req.action.is_some() {
            return err(SessionErrorKind::BadRequest, "reset takes no action");
        }
        let mode = match req.mode.as_deref().map(str::parse::<Mode>).transpose() {
            Ok(m) => m.unwrap_or(self.episode_config.mode),
            Err(e) => return err(SessionErrorKind::BadRequest, e.to_string()),
        };
        let seed = req.scenario_seed.unwrap_or(self.default_seed);
        let result = (|| -> Result<SessionResponse> {
            let scenario = gen_scenario(&self.board, seed, &self.scenario_config)?;
            let config = self.episode_config.clone().with_mode(mode);
            let (episode, obs) = Episode::reset(&self.board, scenario, config, seed)?;
            let done = episode.is_done();
            let response = SessionResponse {
                prompt: Some(crate::prompt::build_prompt(&obs, mode)),
                reward: 0.0,
                done,
                info: StepInfo {
                    iou: episode.current_iou(),
                    step: 0,
                    outcome: episode.outcome().cloned(),
                    reward_exact: Reward::zero(),
                },
            };
            self.episode = Some(episode);
            Ok(response)
        })();
        match result {
            Ok(r) => SessionReply::Ok(r),
            Err(e) => err(SessionErrorKind::Engine, e.to_string()),
        }
    }

    fn step(&mut self, req: &SessionRequest) -> SessionReply {
        if req.scenario_seed.is_some() || req.mode.is_some() {
            return err(SessionErrorKind::BadRequest, "step takes only an action");
        }
        let Some(episode) = self.episode.as_mut().filter(|e| !e.is_done()) else {
            return err(SessionErrorKind::Protocol, "no active episode; send reset first");
        };
        let text = req.action.as_deref().unwrap_or("");
        match episode.step_text(text) {
            Ok(result) => SessionReply::Ok(SessionResponse {
                prompt: result
                    .observation
                    .as_ref()
                    .map(|o| crate::prompt::build_prompt(o, episode.config().mode)),
                reward: result.reward.to_f64(),
                done: result.done,
                info: StepInfo {
                    iou: result.iou,
                    step: episode.steps_taken(),
                    outcome: result.outcome,
                    reward_exact: result.reward,
                },
            }),
            Err(e) => err(SessionErrorKind::Engine, e.to_string()),
        }
    }
}

/// Answers one request per input line until the input ends.
pub fn serve_lines<R: BufRead, W: Write>(session: &mut Session, input: R, mut output: W) -> Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = session.handle_line(&line);
        serde_json::to_writer(&mut output, &reply)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

/// Accepts TCP clients, each with its own session, until the listener fails.
/// `on_bound` receives the bound address (useful with port 0).
pub fn serve_tcp<A: ToSocketAddrs>(
    template: Session,
    address: A,
    on_bound: impl FnOnce(std::net::SocketAddr),
) -> Result<()> {
    let listener = TcpListener::bind(address)?;
    on_bound(listener.local_addr()?);
    for stream in listener.incoming() {
        let stream = stream?;
        let mut session = template.clone();
        thread::spawn(move || {
            let reader = match stream.try_clone() {
                Ok(s) => BufReader::new(s),
                Err(_) => return,
            };
            let _ = serve_lines(&mut session, reader, stream);
        });
    }
    Err(Error::Io(std::io::Error::other("listener closed")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GridSpec;

    fn session() -> Session {
        let board = Board::with_builtin(GridSpec::default()).unwrap();
        Session::new(board, ScenarioConfig::default(), EpisodeConfig::default(), 0)
    }

    fn ok(reply: SessionReply) -> SessionResponse {
        match reply {
            SessionReply::Ok(r) => r,
            SessionReply::Err { error } => panic!("unexpected error {error:?}"),
        }
    }

    fn kind(reply: SessionReply) -> SessionErrorKind {
        match reply {
            SessionReply::Err { error } => error.kind,
            SessionReply::Ok(r) => panic!("expected error, got {r:?}"),
        }
    }

    #[test]
    fn resets_are_deterministic() {
        let mut s = session();
        let a = ok(s.handle_line(r#"{"op":"reset","scenario_seed":7,"mode":"dynamic"}"#));
        let b = ok(s.handle_line(r#"{"op":"reset","scenario_seed":7,"mode":"dynamic"}"#));
        assert_eq!(a, b);
        let st = ok(s.handle_line(r#"{"op":"reset","scenario_seed":7,"mode":"static"}"#));
        assert!(st.prompt.unwrap().contains("HISTORY OF ACTIONS"));
    }

    #[test]
    fn protocol_violations_are_typed() {
        let mut s = session();
        assert_eq!(kind(s.handle_line(r#"{"op":"step","action":"up"}"#)), SessionErrorKind::Protocol);
        assert_eq!(kind(s.handle_line("not json")), SessionErrorKind::BadRequest);
        assert_eq!(kind(s.handle_line(r#"{"op":"reset","mode":"sideways"}"#)), SessionErrorKind::BadRequest);
        assert_eq!(kind(s.handle_line(r#"{"op":"jump"}"#)), SessionErrorKind::BadRequest);
    }

    #[test]
    fn garbage_costs_lambda_and_continues() {
        let mut s = session();
        ok(s.handle_line(r#"{"op":"reset","scenario_seed":3}"#));
        let r = ok(s.handle_line(r#"{"op":"step","action":"garbage"}"#));
        assert_eq!(r.reward, -0.1);
        assert!(!r.done);
        assert_eq!(r.info.step, 1);
    }

    #[test]
    fn episode_ends_then_requires_reset() {
        let mut s = session();
        ok(s.handle_line(r#"{"op":"reset","scenario_seed":3}"#));
        let mut last = None;
        for _ in 0..5 {
            last = Some(ok(s.handle_line(r#"{"op":"step","action":"<answer>no_scaling</answer>"}"#)));
        }
        let last = last.unwrap();
        assert!(last.done && last.prompt.is_none());
        assert_eq!(last.info.outcome, Some(Outcome::HorizonExhausted));
        assert_eq!(kind(s.handle_line(r#"{"op":"step","action":"up"}"#)), SessionErrorKind::Protocol);
    }

    #[test]
    fn serve_lines_answers_each_line() {
        let mut s = session();
        let input = b"{\"op\":\"reset\",\"scenario_seed\":1}\n\n{\"op\":\"step\",\"action\":\"x\"}\n";
        let mut out = Vec::new();
        serve_lines(&mut s, &input[..], &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 2);
    }
}
