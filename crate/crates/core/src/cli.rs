//! The `shapeshift` command line.
//!
//! Exit codes: 0 success, 1 horizon exhausted (or failed cross-check),
//! 2 generation error, 3 agent error, 64 usage error, 65 bad input data,
//! 74 I/O error.

use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::action::ActionType;
use crate::agent::{run_episode, AgentSpec, TemperatureSchedule};
use crate::analytics::{baseline_table, evaluate, render_baseline, reward_tree, AnalyticForm, EvalOptions, RandomPolicyModel};
use crate::episode::{prompt_sha256, read_trace, replay, write_trace, ArtifactHeader, EpisodeConfig, Mode, Outcome};
use crate::error::{Error, Result};
use crate::generator::{
    gen_dataset, gen_scenario, gen_suite, read_suite, repetition_warning, write_dataset, write_suite, DatasetConfig,
    ExportFormat, QuotaPattern, ScenarioConfig,
};
use crate::geometry::{Board, GridSpec, ShapeLibrary};
use crate::reward::RewardProfile;
use crate::session::{serve_lines, serve_tcp, Session};

pub const SEED_ENV: &str = "SHAPESHIFT_SEED";

pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const HORIZON_EXHAUSTED: u8 = 1;
    pub const CHECK_FAILED: u8 = 1;
    pub const GENERATION: u8 = 2;
    pub const AGENT: u8 = 3;
    pub const USAGE: u8 = 64;
    pub const DATA: u8 = 65;
    pub const IO: u8 = 74;
}

pub fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Generation { .. } => exit::GENERATION,
        Error::Agent(_) => exit::AGENT,
        Error::Usage(_) | Error::Config(_) | Error::UnknownShape(_) | Error::Unsupported(_) | Error::Infeasible { .. } => {
            exit::USAGE
        }
        Error::Parse { .. } | Error::Json(_) | Error::DimensionMismatch { .. } | Error::ReplayMismatch { .. } => exit::DATA,
        Error::Io(_) => exit::IO,
    }
}

/// Every knob that can influence an artifact. Paths and parallelism are not
/// part of it because they do not change outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: GridSpec,
    pub horizon: u32,
    pub iou_threshold: f64,
    /// `figure2`, `eq5-literal`, or a path to a profile document.
    pub reward_profile: String,
    pub mode: Mode,
    pub max_distance: u32,
    pub pattern: Option<QuotaPattern>,
    pub shapes: Vec<String>,
    pub agent: String,
    pub dataset_size: usize,
    pub suite_size: usize,
    pub include_noop: bool,
    pub format: ExportFormat,
    pub rationale: Option<String>,
    pub timeout_secs: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            grid: GridSpec::default(),
            horizon: 5,
            iou_threshold: 0.9,
            reward_profile: RewardProfile::FIGURE2.into(),
            mode: Mode::Dynamic,
            max_distance: 5,
            pattern: None,
            shapes: vec![crate::geometry::shapes::CHEVRON.into()],
            agent: "oracle".into(),
            dataset_size: 12_000,
            suite_size: 100,
            include_noop: false,
            format: ExportFormat::Completion,
            rationale: None,
            timeout_secs: 120,
        }
    }
}

/// The same knobs, each optional, as read from a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub seed: Option<u64>,
    pub grid: Option<GridSpec>,
    pub horizon: Option<u32>,
    pub iou_threshold: Option<f64>,
    pub reward_profile: Option<String>,
    pub mode: Option<Mode>,
    pub max_distance: Option<u32>,
    pub pattern: Option<QuotaPattern>,
    pub shapes: Option<Vec<String>>,
    pub agent: Option<String>,
    pub dataset_size: Option<usize>,
    pub suite_size: Option<usize>,
    pub include_noop: Option<bool>,
    pub format: Option<ExportFormat>,
    pub rationale: Option<String>,
    pub timeout_secs: Option<u64>,
}

macro_rules! overlay {
    ($cfg:expr, $layer:expr, $($field:ident),*) => {
        $( if let Some(v) = $layer.$field.clone() { $cfg.$field = v; } )*
    };
}

impl RunConfig {
    pub fn apply(&mut self, layer: &ConfigLayer) {
        overlay!(
            self, layer, seed, grid, horizon, iou_threshold, reward_profile, mode, max_distance, shapes, agent,
            dataset_size, suite_size, include_noop, format, timeout_secs
        );
        if layer.pattern.is_some() {
            self.pattern = layer.pattern;
        }
        if layer.rationale.is_some() {
            self.rationale = layer.rationale.clone();
        }
    }

    /// Default, then file, then the seed environment variable, then flags.
    pub fn resolve(file: Option<&Path>, env_seed: Option<&str>, flags: &ConfigLayer) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            cfg.apply(&load_config_layer(path)?);
        }
        if let Some(raw) = env_seed {
            let seed = raw
                .trim()
                .parse()
                .map_err(|_| Error::Usage(format!("{SEED_ENV}=`{raw}` is not a seed")))?;
            cfg.seed = seed;
        }
        cfg.apply(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.episode_config()?.validate()?;
        if self.timeout_secs == 0 {
            return Err(Error::Config("timeout must be at least one second".into()));
        }
        Ok(())
    }

    pub fn profile(&self) -> Result<RewardProfile> {
        match RewardProfile::by_name(&self.reward_profile) {
            Ok(p) => Ok(p),
            Err(_) if Path::new(&self.reward_profile).is_file() => {
                RewardProfile::from_toml(&fs::read_to_string(&self.reward_profile)?)
            }
            Err(e) => Err(e),
        }
    }

    pub fn board(&self) -> Result<Board> {
        Board::with_builtin(self.grid)
    }

    pub fn episode_config(&self) -> Result<EpisodeConfig> {
        Ok(EpisodeConfig {
            horizon: self.horizon,
            iou_threshold: self.iou_threshold,
            mode: self.mode,
            grid: self.grid,
            reward_profile: self.profile()?,
        })
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            max_distance: self.max_distance,
            horizon: self.horizon,
            iou_threshold: self.iou_threshold,
            shapes: self.shapes.clone(),
            pattern: self.pattern,
        }
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            n: self.dataset_size,
            seed: self.seed,
            shapes: self.shapes.clone(),
            include_noop: self.include_noop,
            iou_threshold: self.iou_threshold,
            rationale_stub: self.rationale.clone(),
        }
    }

    pub fn agent_spec(&self) -> Result<AgentSpec> {
        self.agent.parse()
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn header(&self, command: &str) -> ArtifactHeader {
        let mut value = serde_json::to_value(self).expect("config serializes");
        value["command"] = json!(command);
        ArtifactHeader::new(value)
    }
}

/// Reads a TOML or JSON layer. An artifact header (`{"run_config": {...}}`)
/// is accepted too, so a sidecar can seed a rerun.
pub fn load_config_layer(path: &Path) -> Result<ConfigLayer> {
    let text = fs::read_to_string(path)?;
    let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    if is_json {
        let mut value: serde_json::Value = serde_json::from_str(&text)?;
        if let Some(inner) = value.get_mut("run_config") {
            value = inner.take();
        }
        if let Some(obj) = value.as_object_mut() {
            obj.remove("command");
        }
        serde_json::from_value(value).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Parser)]
#[command(name = "shapeshift", version, about = "ASCII-grid spatial transformation puzzles")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML or JSON config file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (outputs do not depend on it).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Grid size as WxH.
    #[arg(long, global = true, value_parser = parse_grid)]
    pub grid: Option<GridSpec>,
    #[arg(long, global = true)]
    pub horizon: Option<u32>,
    #[arg(long, global = true)]
    pub iou_threshold: Option<f64>,
    /// `figure2`, `eq5-literal` or a profile file.
    #[arg(long, global = true)]
    pub reward_profile: Option<String>,
    #[arg(long, global = true)]
    pub mode: Option<Mode>,
    #[arg(long, global = true)]
    pub max_distance: Option<u32>,
    /// Required type counts, e.g. 3t1r1s.
    #[arg(long, global = true)]
    pub pattern: Option<QuotaPattern>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub shapes: Option<Vec<String>>,
    /// random[:seed=N,space=8|11], oracle, scripted:a,b, cmd:<command>, tcp:<host:port>
    #[arg(long, global = true)]
    pub agent: Option<String>,
    /// Seconds to wait for an external agent reply.
    #[arg(long, global = true)]
    pub timeout_secs: Option<u64>,
    /// Do not echo the effective config.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

fn parse_grid(s: &str) -> std::result::Result<GridSpec, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("`{s}` is not WxH"))?;
    let w = w.trim().parse().map_err(|_| format!("bad width in `{s}`"))?;
    let h = h.trim().parse().map_err(|_| format!("bad height in `{s}`"))?;
    GridSpec::new(w, h).map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single-action training samples as JSONL.
    GenDataset(GenDatasetArgs),
    /// Multi-step scenarios as JSONL.
    GenSuite(GenSuiteArgs),
    /// One closed-loop episode; writes a trace.
    Run(RunArgs),
    /// Runs an agent over a suite and reports rewards.
    Evaluate(EvaluateArgs),
    /// Expected reward of the uniform random policy.
    Baseline(BaselineArgs),
    /// Re-executes a trace and checks it step by step.
    Replay(ReplayArgs),
    /// Shape library utilities.
    #[command(subcommand)]
    Shapes(ShapesCommand),
    /// Hosts client-driven episodes over stdio or TCP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenDatasetArgs {
    #[arg(long)]
    pub n: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<ExportFormat>,
    #[arg(long)]
    pub include_noop: bool,
    /// Text placed before every answer tag.
    #[arg(long)]
    pub rationale: Option<String>,
}

#[derive(Debug, Args)]
pub struct GenSuiteArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Take the scenario from a suite instead of generating it from the seed.
    #[arg(long)]
    pub suite: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Trace output; stdout when absent.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Suite file; generated (and written) when it does not exist.
    #[arg(long)]
    pub suite: Option<PathBuf>,
    #[arg(long)]
    pub suite_size: Option<usize>,
    /// Also print cumulative reward per step.
    #[arg(long)]
    pub steps: bool,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Directory for per-episode traces.
    #[arg(long)]
    pub traces: Option<PathBuf>,
    /// Score without the repetition penalty.
    #[arg(long)]
    pub without_repetition: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TreeRoot {
    None,
    Scale,
    Translation,
    Rotation,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// Monte Carlo trials for the cross-check; 0 skips it.
    #[arg(long, default_value_t = 1_000_000)]
    pub mc_trials: u64,
    /// Penalty for invalid selections.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Labels the random policy draws from: 8 or 11.
    #[arg(long, default_value_t = 8)]
    pub space: usize,
    #[arg(long, value_enum, default_value_t = FormArg::Corrected)]
    pub form: FormArg,
    /// Keep the repetition penalty in the Monte Carlo episodes.
    #[arg(long)]
    pub with_repetition: bool,
    /// Print the reward tree of the plan.
    #[arg(long, value_enum)]
    pub tree: Option<TreeRoot>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    Corrected,
    Literal,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub trace: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum ShapesCommand {
    /// Writes every mask as a text file.
    Export {
        #[arg(long, default_value = "shapes")]
        out: PathBuf,
    },
    /// Prints the shape identifiers.
    List,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen on this address instead of stdio.
    #[arg(long)]
    pub tcp: Option<String>,
}

impl Cli {
    fn flag_layer(&self) -> ConfigLayer {
        let c = &self.common;
        let mut layer = ConfigLayer {
            seed: c.seed,
            grid: c.grid,
            horizon: c.horizon,
            iou_threshold: c.iou_threshold,
            reward_profile: c.reward_profile.clone(),
            mode: c.mode,
            max_distance: c.max_distance,
            pattern: c.pattern,
            shapes: c.shapes.clone(),
            agent: c.agent.clone(),
            timeout_secs: c.timeout_secs,
            ..Default::default()
        };
        match &self.command {
            Command::GenDataset(a) => {
                layer.dataset_size = a.n;
                layer.format = a.format;
                layer.include_noop = a.include_noop.then_some(true);
                layer.rationale = a.rationale.clone();
            }
            Command::GenSuite(a) => layer.suite_size = a.n,
            Command::Evaluate(a) => layer.suite_size = a.suite_size,
            _ => {}
        }
        layer
    }
}

/// Parses `std::env::args`, runs, and maps errors to exit codes.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::SUCCESS };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("shapeshift: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn run(cli: Cli) -> Result<u8> {
    let env_seed = std::env::var(SEED_ENV).ok();
    let cfg = RunConfig::resolve(cli.common.config.as_deref(), env_seed.as_deref(), &cli.flag_layer())?;
    if !cli.common.quiet {
        eprintln!("effective config: {}", serde_json::to_string(&cfg)?);
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.common.jobs {
        if j == 0 {
            return Err(Error::Usage("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| Error::Usage(e.to_string()))?;
    pool.install(|| dispatch(&cli.command, &cfg))
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<u8> {
    match command {
        Command::GenDataset(a) => cmd_gen_dataset(a, cfg),
        Command::GenSuite(a) => cmd_gen_suite(a, cfg),
        Command::Run(a) => cmd_run(a, cfg),
        Command::Evaluate(a) => cmd_evaluate(a, cfg),
        Command::Baseline(a) => cmd_baseline(a, cfg),
        Command::Replay(a) => cmd_replay(a, cfg),
        Command::Shapes(ShapesCommand::Export { out }) => {
            let n = ShapeLibrary::builtin().export_dir(out)?;
            println!("wrote {n} masks to {}", out.display());
            Ok(exit::SUCCESS)
        }
        Command::Shapes(ShapesCommand::List) => {
            for id in ShapeLibrary::builtin().shape_ids() {
                println!("{id}");
            }
            Ok(exit::SUCCESS)
        }
        Command::Serve(a) => cmd_serve(a, cfg),
    }
}

/// Writes `bytes` to `out` (or stdout) plus a `<out>.meta.json` sidecar.
fn emit_artifact(out: Option<&Path>, bytes: &[u8], header: &ArtifactHeader, count: usize) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, bytes)?;
            let meta = json!({
                "tool": header.tool,
                "version": header.version,
                "run_config": header.run_config,
                "count": count,
                "sha256": prompt_sha256(&String::from_utf8_lossy(bytes)),
            });
            let mut sidecar = path.as_os_str().to_owned();
            sidecar.push(".meta.json");
            fs::write(PathBuf::from(sidecar), serde_json::to_string_pretty(&meta)? + "\n")?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(bytes)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn cmd_gen_dataset(a: &GenDatasetArgs, cfg: &RunConfig) -> Result<u8> {
    let board = cfg.board()?;
    let samples = gen_dataset(&board, &cfg.dataset_config())?;
    let mut buf = Vec::new();
    write_dataset(&samples, cfg.format, &mut buf)?;
    emit_artifact(a.out.as_deref(), &buf, &cfg.header("gen-dataset"), samples.len())?;
    eprintln!("generated {} samples", samples.len());
    Ok(exit::SUCCESS)
}

fn cmd_gen_suite(a: &GenSuiteArgs, cfg: &RunConfig) -> Result<u8> {
    let board = cfg.board()?;
    let suite = gen_suite(&board, cfg.seed, cfg.suite_size, &cfg.scenario_config())?;
    let profile = cfg.profile()?;
    for s in &suite {
        if let Some(w) = repetition_warning(s, &profile) {
            eprintln!("warning: {w}");
        }
    }
    let mut buf = Vec::new();
    write_suite(&suite, &mut buf)?;
    emit_artifact(a.out.as_deref(), &buf, &cfg.header("gen-suite"), suite.len())?;
    Ok(exit::SUCCESS)
}

fn load_suite(path: &Path, board: &Board) -> Result<Vec<crate::scenario::ScenarioSpec>> {
    let suite = read_suite(&fs::read_to_string(path)?, board)?;
    if suite.is_empty() {
        return Err(Error::Usage(format!("suite {} is empty", path.display())));
    }
    Ok(suite)
}

fn outcome_code(outcome: &Outcome) -> u8 {
    match outcome {
        Outcome::Success => exit::SUCCESS,
        Outcome::HorizonExhausted => exit::HORIZON_EXHAUSTED,
        Outcome::AgentError(_) => exit::AGENT,
    }
}

fn cmd_run(a: &RunArgs, cfg: &RunConfig) -> Result<u8> {
    let board = cfg.board()?;
    let scenario = match &a.suite {
        Some(path) => load_suite(path, &board)?
            .into_iter()
            .nth(a.index)
            .ok_or_else(|| Error::Usage(format!("suite has no scenario {}", a.index)))?,
        None => gen_scenario(&board, cfg.seed, &cfg.scenario_config())?,
    };
    let spec = cfg.agent_spec()?;
    let mut agent = spec.build(cfg.timeout())?;
    let record = run_episode(
        &board,
        scenario,
        cfg.episode_config()?,
        agent.as_mut(),
        0,
        TemperatureSchedule::default(),
    )?;
    let header = cfg.header("run");
    match &a.trace {
        Some(path) => write_trace(&record, &header, BufWriter::new(fs::File::create(path)?))?,
        None => write_trace(&record, &header, io::stdout().lock())?,
    }
    eprintln!(
        "outcome {:?}, {} steps, total {} ({:.3})",
        record.outcome,
        record.steps.len(),
        record.total_reward,
        record.total()
    );
    Ok(outcome_code(&record.outcome))
}

fn cmd_evaluate(a: &EvaluateArgs, cfg: &RunConfig) -> Result<u8> {
    let board = cfg.board()?;
    let suite = match &a.suite {
        Some(path) if path.exists() => load_suite(path, &board)?,
        other => {
            let suite = gen_suite(&board, cfg.seed, cfg.suite_size, &cfg.scenario_config())?;
            if suite.is_empty() {
                return Err(Error::Usage("suite size must be at least 1".into()));
            }
            if let Some(path) = other {
                let mut buf = Vec::new();
                write_suite(&suite, &mut buf)?;
                emit_artifact(Some(path), &buf, &cfg.header("gen-suite"), suite.len())?;
            }
            suite
        }
    };
    let mut config = cfg.episode_config()?;
    if a.without_repetition {
        config.reward_profile = config.reward_profile.without_repetition();
    }
    let options = EvalOptions {
        timeout: cfg.timeout(),
        temperature: TemperatureSchedule::default(),
    };
    let ev = evaluate(&board, &suite, &config, &cfg.agent_spec()?, &options)?;
    print!("{}", ev.report.render_text(a.steps));
    let header = cfg.header("evaluate");
    if let Some(path) = &a.report {
        let doc = json!({ "header": header, "report": ev.report });
        fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
    }
    if let Some(dir) = &a.traces {
        fs::create_dir_all(dir)?;
        for (i, r) in ev.records.iter().enumerate() {
            let f = BufWriter::new(fs::File::create(dir.join(format!("episode_{i:04}.jsonl")))?);
            write_trace(r, &header, f)?;
        }
    }
    Ok(exit::SUCCESS)
}

fn cmd_baseline(a: &BaselineArgs, cfg: &RunConfig) -> Result<u8> {
    let pattern = cfg.pattern.unwrap_or_else(QuotaPattern::mixed_five);
    let plan = pattern.representative_plan()?;
    let base = cfg.profile()?;
    let mut profile = base.clone();
    if let Some(l) = a.lambda {
        profile.invalid_penalty = l;
    }
    let mut model = RandomPolicyModel::new(plan.clone(), profile.clone(), a.space, cfg.horizon)?;
    if a.with_repetition {
        model = model.with_repetition(&profile);
    }
    let form = match a.form {
        FormArg::Corrected => AnalyticForm::Corrected,
        FormArg::Literal => AnalyticForm::Literal,
    };
    let rows = baseline_table(&model, form, a.mc_trials, cfg.seed)?;
    let calibrated = base == RewardProfile::figure2()
        && profile.invalid_penalty == 0.1
        && a.space == 8
        && form == AnalyticForm::Corrected
        && pattern == QuotaPattern::mixed_five()
        && cfg.horizon == 5;
    let title = format!(
        "random policy, plan {plan}, |A|={}, lambda={}, profile {}{}",
        a.space,
        profile.invalid_penalty,
        profile.name,
        if calibrated { " (calibrated defaults)" } else { " (NON-CALIBRATED alternative parameters)" }
    );
    if a.json {
        let doc = json!({ "header": cfg.header("baseline"), "title": title, "calibrated": calibrated, "rows": rows });
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        print!("{}", render_baseline(&rows, &title));
    }
    if let Some(root) = a.tree {
        let root = match root {
            TreeRoot::None => None,
            TreeRoot::Scale => Some(ActionType::Scaling),
            TreeRoot::Translation => Some(ActionType::Translation),
            TreeRoot::Rotation => Some(ActionType::Rotation),
        };
        print!("{}", reward_tree(&plan, &base, cfg.horizon, root)?.render());
    }
    // The Monte Carlo cross-check simulates the penalty; the analytic form ignores it.
    let checked = !a.with_repetition && form == AnalyticForm::Corrected;
    if checked && rows.iter().any(|r| r.agrees == Some(false)) {
        eprintln!("Monte Carlo cross-check failed");
        return Ok(exit::CHECK_FAILED);
    }
    Ok(exit::SUCCESS)
}

fn cmd_replay(a: &ReplayArgs, _cfg: &RunConfig) -> Result<u8> {
    let (_, record) = read_trace(BufReader::new(fs::File::open(&a.trace)?))?;
    let board = Board::with_builtin(record.config.grid)?;
    let fresh = replay(&record, &board)?;
    println!(
        "replay ok: {} steps, outcome {:?}, total {}",
        fresh.steps.len(),
        fresh.outcome,
        fresh.total_reward
    );
    Ok(exit::SUCCESS)
}

fn cmd_serve(a: &ServeArgs, cfg: &RunConfig) -> Result<u8> {
    let session = Session::new(cfg.board()?, cfg.scenario_config(), cfg.episode_config()?, cfg.seed);
    match &a.tcp {
        Some(addr) => {
            serve_tcp(session, addr.as_str(), |bound| eprintln!("listening on {bound}"))?;
        }
        None => {
            let mut session = session;
            let stdin = io::stdin();
            serve_lines(&mut session, stdin.lock(), io::stdout().lock())?;
        }
    }
    Ok(exit::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_is_flag_env_file_default() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.toml");
        fs::write(&file, "seed = 5\nhorizon = 7\nmax_distance = 4\n").unwrap();
        let flags = ConfigLayer { horizon: Some(6), ..Default::default() };
        let cfg = RunConfig::resolve(Some(&file), Some("9"), &flags).unwrap();
        assert_eq!((cfg.seed, cfg.horizon, cfg.max_distance), (9, 6, 4));
        let flags = ConfigLayer { seed: Some(1), ..Default::default() };
        assert_eq!(RunConfig::resolve(Some(&file), Some("9"), &flags).unwrap().seed, 1);
        assert_eq!(RunConfig::resolve(None, None, &ConfigLayer::default()).unwrap(), RunConfig::default());
        assert!(RunConfig::resolve(None, Some("x"), &ConfigLayer::default()).is_err());
    }

    #[test]
    fn config_files_reject_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.toml");
        fs::write(&file, "sede = 5\n").unwrap();
        assert!(matches!(load_config_layer(&file), Err(Error::Config(_))));
    }

    #[test]
    fn headers_round_trip_as_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { seed: 42, pattern: Some(QuotaPattern::mixed_five()), ..Default::default() };
        let file = dir.path().join("x.meta.json");
        fs::write(&file, serde_json::to_string(&cfg.header("gen-suite")).unwrap()).unwrap();
        let back = RunConfig::resolve(Some(&file), None, &ConfigLayer::default()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn grid_flag_parses() {
        assert_eq!(parse_grid("10x12").unwrap(), GridSpec::new(10, 12).unwrap());
        assert!(parse_grid("4x4").is_err());
        assert!(parse_grid("big").is_err());
    }

    #[test]
    fn exit_codes_are_stable() {
        assert_eq!(exit_code(&Error::Generation { requested: 2, achieved: 1 }), 2);
        assert_eq!(exit_code(&Error::Agent("x".into())), 3);
        assert_eq!(exit_code(&Error::Usage("x".into())), 64);
        assert_eq!(exit_code(&Error::ReplayMismatch { step: 1, detail: "x".into() }), 65);
    }

    #[test]
    fn cli_parses_subcommands() {
        let cli = Cli::try_parse_from(["shapeshift", "--seed", "3", "evaluate", "--pattern", "3t1r1s", "--steps"]).unwrap();
        assert_eq!(cli.common.seed, Some(3));
        assert!(matches!(cli.command, Command::Evaluate(EvaluateArgs { steps: true, .. })));
        assert!(Cli::try_parse_from(["shapeshift", "shapes", "export", "--out", "x"]).is_ok());
        assert!(Cli::try_parse_from(["shapeshift", "bogus"]).is_err());
    }
}
