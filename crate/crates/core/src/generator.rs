//! Seeded synthesis of single-action training samples and multi-step scenarios.
//!
//! Everything here is a pure function of `(seed, config)`. Generated items are
//! checked against their own verifiers before they are returned.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::{index, IndexedRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{ActionLabel, ActionType};
use crate::episode::{Mode, Observation};
use crate::error::{Error, Result};
use crate::geometry::{iou, Board, Effect, Orientation, ScaleExp, ShapeState};
use crate::prompt::{build_prompt, environment_block, system_prompt};
use crate::reward::{derive_quota_plan, QuotaPlan, RewardProfile};
use crate::scenario::{path_problem, state_after, ScenarioSpec};

/// Mixes a base seed with an index into an independent stream seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Scenarios

/// Required operation counts per type, written `<n>t<n>r<n>s`.
///
/// A pattern also requires that no single label appears more than twice,
/// so `3t` means two moves in one direction and one in a perpendicular one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct QuotaPattern {
    pub translation: u32,
    pub rotation: u32,
    pub scaling: u32,
}

impl QuotaPattern {
    pub const MAX_PER_LABEL: u32 = 2;

    /// Three translations, one rotation, one scaling.
    pub fn mixed_five() -> Self {
        QuotaPattern {
            translation: 3,
            rotation: 1,
            scaling: 1,
        }
    }

    pub fn distance(&self) -> u32 {
        self.translation + self.rotation + self.scaling
    }

    /// A concrete plan with these type totals and at most two uses per label.
    pub fn representative_plan(&self) -> Result<QuotaPlan> {
        let cap = Self::MAX_PER_LABEL;
        if self.translation > 4 * cap || self.rotation > 3 || self.scaling > cap {
            return Err(Error::Config(format!("pattern {self} has no canonical plan")));
        }
        let mut counts = Vec::new();
        let mut left = self.translation;
        for label in [ActionLabel::Right, ActionLabel::Up, ActionLabel::Left, ActionLabel::Down] {
            let n = left.min(cap);
            counts.push((label, n));
            left -= n;
        }
        let quarter = self.rotation.min(2);
        counts.push((ActionLabel::QuarterRotation, quarter));
        counts.push((ActionLabel::SlightRotation, self.rotation - quarter));
        counts.push((ActionLabel::DoubleSize, self.scaling));
        let plan = QuotaPlan::from_counts(counts)?;
        debug_assert!(self.matches(&plan));
        Ok(plan)
    }

    pub fn matches(&self, plan: &QuotaPlan) -> bool {
        plan.type_total(ActionType::Translation) == self.translation
            && plan.type_total(ActionType::Rotation) == self.rotation
            && plan.type_total(ActionType::Scaling) == self.scaling
            && plan.quotas().values().all(|n| *n <= Self::MAX_PER_LABEL)
    }
}

impl fmt::Display for QuotaPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}t{}r{}s", self.translation, self.rotation, self.scaling)
    }
}

impl TryFrom<String> for QuotaPattern {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<QuotaPattern> for String {
    fn from(p: QuotaPattern) -> String {
        p.to_string()
    }
}

impl FromStr for QuotaPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Usage(format!("pattern `{s}` is not of the form <n>t<n>r<n>s"));
        let mut counts = HashMap::new();
        let mut digits = String::new();
        for ch in s.chars() {
            if ch.is_ascii_digit() {
                digits.push(ch);
            } else {
                let n: u32 = digits.parse().map_err(|_| bad())?;
                digits.clear();
                if counts.insert(ch, n).is_some() {
                    return Err(bad());
                }
            }
        }
        if !digits.is_empty() || counts.keys().any(|k| !"trs".contains(*k)) {
            return Err(bad());
        }
        Ok(QuotaPattern {
            translation: counts.get(&'t').copied().unwrap_or(0),
            rotation: counts.get(&'r').copied().unwrap_or(0),
            scaling: counts.get(&'s').copied().unwrap_or(0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub max_distance: u32,
    pub horizon: u32,
    pub iou_threshold: f64,
    pub shapes: Vec<String>,
    pub pattern: Option<QuotaPattern>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            max_distance: 5,
            horizon: 5,
            iou_threshold: 0.9,
            shapes: vec![crate::geometry::shapes::CHEVRON.to_string()],
            pattern: None,
        }
    }
}

impl ScenarioConfig {
    fn validate(&self, board: &Board) -> Result<()> {
        if self.max_distance < 1 || self.max_distance > self.horizon {
            return Err(Error::Config(format!(
                "max distance {} must lie in [1, horizon {}]",
                self.max_distance, self.horizon
            )));
        }
        if let Some(p) = &self.pattern {
            if p.distance() == 0 || p.distance() > self.max_distance {
                return Err(Error::Config(format!(
                    "pattern {p} has distance {} outside [1, {}]",
                    p.distance(),
                    self.max_distance
                )));
            }
        }
        if self.shapes.is_empty() {
            return Err(Error::Config("no shapes selected".into()));
        }
        for s in &self.shapes {
            board.library().entry(s)?;
        }
        Ok(())
    }
}

fn rotation_cost(steps: u32) -> u32 {
    steps / 2 + steps % 2
}

/// Every canonical quota plan with exactly `distance` atomic actions.
pub fn decompositions(distance: u32) -> Vec<QuotaPlan> {
    let d = distance as i64;
    let mut out = Vec::new();
    for steps in 0..8u32 {
        let rc = rotation_cost(steps) as i64;
        for ds in -2i64..=2 {
            let rest = d - rc - ds.abs();
            if rest < 0 {
                continue;
            }
            for dx in -rest..=rest {
                let ry = rest - dx.abs();
                for dy in [-ry, ry] {
                    let mut counts = vec![
                        (ActionLabel::QuarterRotation, steps / 2),
                        (ActionLabel::SlightRotation, steps % 2),
                    ];
                    counts.push(if ds >= 0 {
                        (ActionLabel::DoubleSize, ds as u32)
                    } else {
                        (ActionLabel::HalfSize, (-ds) as u32)
                    });
                    counts.push(if dx >= 0 {
                        (ActionLabel::Right, dx as u32)
                    } else {
                        (ActionLabel::Left, (-dx) as u32)
                    });
                    counts.push(if dy >= 0 {
                        (ActionLabel::Down, dy as u32)
                    } else {
                        (ActionLabel::Up, (-dy) as u32)
                    });
                    out.push(QuotaPlan::from_counts(counts).expect("effective labels"));
                    if ry == 0 {
                        break;
                    }
                }
            }
        }
    }
    out
}

fn scale_delta(plan: &QuotaPlan) -> i8 {
    plan.quota(ActionLabel::DoubleSize) as i8 - plan.quota(ActionLabel::HalfSize) as i8
}

/// One scenario with `1 <= distance <= max_distance` that passes [`ScenarioSpec::verify`].
///
/// The distance is uniform over the allowed range, the plan uniform over its
/// canonical decompositions, and the start uniform over fitting states.
pub fn gen_scenario(board: &Board, seed: u64, config: &ScenarioConfig) -> Result<ScenarioSpec> {
    config.validate(board)?;
    let mut rng = rng_for(seed);
    let plans_by_distance: Vec<Vec<QuotaPlan>> = (0..=config.max_distance)
        .map(|d| match &config.pattern {
            Some(p) if p.distance() != d => Vec::new(),
            Some(p) => decompositions(d).into_iter().filter(|q| p.matches(q)).collect(),
            None => decompositions(d),
        })
        .collect();
    let distances: Vec<u32> = (1..=config.max_distance)
        .filter(|d| !plans_by_distance[*d as usize].is_empty())
        .collect();
    if distances.is_empty() {
        return Err(Error::Generation {
            requested: 1,
            achieved: 0,
        });
    }

    const PLAN_ATTEMPTS: usize = 200;
    const START_ATTEMPTS: usize = 50;
    for _ in 0..PLAN_ATTEMPTS {
        let d = *distances.choose(&mut rng).expect("nonempty");
        let plan = plans_by_distance[d as usize]
            .choose(&mut rng)
            .expect("nonempty")
            .clone();
        let ds = scale_delta(&plan);
        let scales: Vec<ScaleExp> = ScaleExp::all()
            .filter(|s| ScaleExp::new(s.exponent() + ds).is_ok())
            .collect();
        if scales.is_empty() {
            continue;
        }
        for _ in 0..START_ATTEMPTS {
            let shape = config.shapes.choose(&mut rng).expect("nonempty").clone();
            let orientation = Orientation::from_index(rng.random_range(0..8));
            let scale = *scales.choose(&mut rng).expect("nonempty");
            let (cols, rows) = board.anchor_range(&shape, orientation, scale)?;
            let start = ShapeState {
                shape,
                orientation,
                scale,
                col: rng.random_range(0..cols),
                row: rng.random_range(0..rows),
            };
            let counts: Vec<_> = plan.quotas().iter().map(|(l, n)| (*l, *n)).collect();
            let Some(target) = state_after(board, &start, &counts)? else {
                continue;
            };
            if path_problem(board, &start, &target, &plan, config.iou_threshold)?.is_some() {
                continue;
            }
            let spec = ScenarioSpec::new(board, start, target, seed)?;
            spec.verify(board, config.iou_threshold)?;
            debug_assert_eq!(spec.plan, plan);
            return Ok(spec);
        }
    }
    Err(Error::Generation {
        requested: 1,
        achieved: 0,
    })
}

/// `n` scenarios; scenario `i` uses seed `derive_seed(seed, i)`.
pub fn gen_suite(board: &Board, seed: u64, n: usize, config: &ScenarioConfig) -> Result<Vec<ScenarioSpec>> {
    (0..n)
        .into_par_iter()
        .map(|i| gen_scenario(board, derive_seed(seed, i as u64), config))
        .collect()
}

/// Warning text when optimal play would pay repetition penalties.
pub fn repetition_warning(spec: &ScenarioSpec, profile: &RewardProfile) -> Option<String> {
    let labels = spec.plan.repeated_labels(profile);
    (!labels.is_empty()).then(|| {
        format!(
            "scenario seed {}: optimal play repeats {:?} more than {} times",
            spec.seed, labels, profile.repetition_threshold
        )
    })
}

pub fn write_suite<W: Write>(suite: &[ScenarioSpec], mut out: W) -> Result<()> {
    for s in suite {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_suite(text: &str, board: &Board) -> Result<Vec<ScenarioSpec>> {
    let mut suite = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let spec: ScenarioSpec = serde_json::from_str(line)
            .map_err(|e| Error::parse(i + 1, format!("scenario: {e}")))?;
        spec.check_consistency(board)
            .map_err(|e| Error::parse(i + 1, e.to_string()))?;
        suite.push(spec);
    }
    Ok(suite)
}

// ---------------------------------------------------------------------------
// Single-action samples

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n: usize,
    pub seed: u64,
    pub shapes: Vec<String>,
    /// Also emit `no_*` labels, whose start and target coincide.
    pub include_noop: bool,
    pub iou_threshold: f64,
    /// Text placed before the answer tag in every completion.
    pub rationale_stub: Option<String>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n: 12_000,
            seed: 0,
            shapes: vec![crate::geometry::shapes::CHEVRON.to_string()],
            include_noop: false,
            iou_threshold: 0.9,
            rationale_stub: None,
        }
    }
}

impl DatasetConfig {
    pub fn labels(&self) -> Vec<ActionLabel> {
        ActionLabel::ALL
            .into_iter()
            .filter(|l| self.include_noop || !l.is_noop())
            .collect()
    }

    fn labels_of(&self, category: Option<ActionType>) -> Vec<ActionLabel> {
        self.labels()
            .into_iter()
            .filter(|l| category.is_none_or(|c| l.action_type() == c))
            .collect()
    }
}

pub fn category_code(ty: ActionType) -> &'static str {
    match ty {
        ActionType::Rotation => "rot",
        ActionType::Translation => "trans",
        ActionType::Scaling => "scale",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftSample {
    pub prompt: String,
    pub completion: String,
    pub label: ActionLabel,
    pub category: String,
    pub seed: u64,
    #[serde(skip)]
    pub start: Option<ShapeState>,
    #[serde(skip)]
    pub target: Option<ShapeState>,
}

impl SftSample {
    fn build(
        board: &Board,
        start: ShapeState,
        target: ShapeState,
        label: ActionLabel,
        seed: u64,
        rationale: Option<&str>,
    ) -> Result<Self> {
        let obs = Observation {
            target_ascii: board.render(&target)?,
            current_ascii: board.render(&start)?,
            history: Vec::new(),
            step_index: 1,
        };
        let completion = match rationale {
            Some(r) => format!("{r}{}", label.as_answer()),
            None => label.as_answer(),
        };
        Ok(SftSample {
            prompt: build_prompt(&obs, Mode::Dynamic),
            completion,
            label,
            category: category_code(label.action_type()).to_string(),
            seed,
            start: Some(start),
            target: Some(target),
        })
    }

    /// The pair must differ by exactly this sample's label (or not at all for `no_*`).
    pub fn verify(&self) -> Result<()> {
        let (Some(start), Some(target)) = (&self.start, &self.target) else {
            return Err(Error::Usage("sample carries no states to verify".into()));
        };
        let plan = derive_quota_plan(start, target)?;
        let expected = if self.label.is_noop() {
            QuotaPlan::empty()
        } else {
            QuotaPlan::from_counts([(self.label, 1)])?
        };
        if plan != expected {
            return Err(Error::Config(format!(
                "sample {} expects {expected} but the pair needs {plan}",
                self.label
            )));
        }
        Ok(())
    }

    pub fn key(&self) -> Option<(String, String, ActionLabel)> {
        Some((
            self.start.as_ref()?.digest(),
            self.target.as_ref()?.digest(),
            self.label,
        ))
    }
}

/// A contiguous block of candidate start states: one footprint, a rectangle of anchors.
#[derive(Debug, Clone)]
struct CandidateBlock {
    shape: String,
    orientation: Orientation,
    scale: ScaleExp,
    cols: usize,
    rows: usize,
    col_offset: usize,
    row_offset: usize,
}

impl CandidateBlock {
    fn len(&self) -> usize {
        self.cols * self.rows
    }
}

/// All start states from which one label yields a clean, visibly different pair.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    label: ActionLabel,
    blocks: Vec<CandidateBlock>,
    len: usize,
}

impl CandidatePool {
    pub fn build(board: &Board, label: ActionLabel, shapes: &[String], iou_threshold: f64) -> Result<Self> {
        let mut blocks = Vec::new();
        for shape in shapes {
            for orientation in Orientation::all() {
                for scale in ScaleExp::all() {
                    if let Some(block) = candidate_block(board, label, shape, orientation, scale, iou_threshold)? {
                        blocks.push(block);
                    }
                }
            }
        }
        let len = blocks.iter().map(CandidateBlock::len).sum();
        Ok(CandidatePool { label, blocks, len })
    }

    pub fn label(&self) -> ActionLabel {
        self.label
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The `i`-th candidate start state in a fixed enumeration order.
    pub fn get(&self, mut i: usize) -> Option<ShapeState> {
        for b in &self.blocks {
            if i < b.len() {
                return Some(ShapeState {
                    shape: b.shape.clone(),
                    orientation: b.orientation,
                    scale: b.scale,
                    col: b.col_offset + i % b.cols,
                    row: b.row_offset + i / b.cols,
                });
            }
            i -= b.len();
        }
        None
    }
}

fn candidate_block(
    board: &Board,
    label: ActionLabel,
    shape: &str,
    orientation: Orientation,
    scale: ScaleExp,
    iou_threshold: f64,
) -> Result<Option<CandidateBlock>> {
    let (cols, rows) = board.anchor_range(shape, orientation, scale)?;
    let probe = ShapeState {
        shape: shape.to_string(),
        orientation,
        scale,
        col: 0,
        row: 0,
    };
    let whole = |cols, rows| CandidateBlock {
        shape: shape.to_string(),
        orientation,
        scale,
        cols,
        rows,
        col_offset: 0,
        row_offset: 0,
    };
    if label.is_noop() {
        return Ok(Some(whole(cols, rows)));
    }
    // Work at an interior-enough probe anchor; fit and overlap only depend on
    // the footprints, not on where the pair sits.
    let t = board.apply(&probe, label.transform())?;
    let mut block = whole(cols, rows);
    match label {
        ActionLabel::Right => block.cols = cols.saturating_sub(1),
        ActionLabel::Down => block.rows = rows.saturating_sub(1),
        ActionLabel::Left => {
            block.cols = cols.saturating_sub(1);
            block.col_offset = 1;
        }
        ActionLabel::Up => {
            block.rows = rows.saturating_sub(1);
            block.row_offset = 1;
        }
        _ => {
            if t.effect == Effect::OutOfRange {
                return Ok(None);
            }
            let (tc, tr) = board.anchor_range(shape, t.state.orientation, t.state.scale)?;
            block.cols = cols.min(tc);
            block.rows = rows.min(tr);
        }
    }
    if block.len() == 0 {
        return Ok(None);
    }
    let start = ShapeState {
        col: block.col_offset,
        row: block.row_offset,
        ..probe
    };
    let target = board.apply(&start, label.transform())?;
    debug_assert_eq!(target.effect, Effect::Applied);
    let overlap = iou(&board.rasterize(&start)?, &board.rasterize(&target.state)?)?;
    if overlap >= iou_threshold {
        return Ok(None);
    }
    Ok(Some(block))
}

fn pair_for(board: &Board, start: ShapeState, label: ActionLabel) -> Result<(ShapeState, ShapeState)> {
    let target = board.apply(&start, label.transform())?.state;
    Ok((start, target))
}

/// One building-block sample. `category = None` draws from every label.
pub fn gen_building_block(
    board: &Board,
    seed: u64,
    category: Option<ActionType>,
    config: &DatasetConfig,
) -> Result<SftSample> {
    let mut rng = rng_for(seed);
    let labels = config.labels_of(category);
    let label = *labels
        .choose(&mut rng)
        .ok_or_else(|| Error::Config("no labels in the requested category".into()))?;
    let pool = CandidatePool::build(board, label, &config.shapes, config.iou_threshold)?;
    if pool.is_empty() {
        return Err(Error::Generation {
            requested: 1,
            achieved: 0,
        });
    }
    let start = pool.get(rng.random_range(0..pool.len())).expect("in range");
    let (start, target) = pair_for(board, start, label)?;
    let sample = SftSample::build(board, start, target, label, seed, config.rationale_stub.as_deref())?;
    sample.verify()?;
    Ok(sample)
}

/// `config.n` distinct samples spread evenly over the label set.
///
/// Per-label counts differ by at most one. Within a label, starts are drawn
/// without replacement, so `(start, target, label)` never repeats.
pub fn gen_dataset(board: &Board, config: &DatasetConfig) -> Result<Vec<SftSample>> {
    if config.n == 0 {
        return Err(Error::Usage("dataset size must be at least 1".into()));
    }
    let mut rng = rng_for(config.seed);
    let mut labels = config.labels();
    use rand::seq::SliceRandom;
    labels.shuffle(&mut rng);
    let pools: Vec<CandidatePool> = labels
        .par_iter()
        .map(|l| CandidatePool::build(board, *l, &config.shapes, config.iou_threshold))
        .collect::<Result<_>>()?;

    let per_label: Vec<usize> = (0..labels.len())
        .map(|i| config.n / labels.len() + usize::from(i < config.n % labels.len()))
        .collect();
    let achieved: usize = pools.iter().zip(&per_label).map(|(p, n)| p.len().min(*n)).sum();
    if achieved < config.n {
        return Err(Error::Generation {
            requested: config.n,
            achieved,
        });
    }

    let mut picks: Vec<(usize, usize)> = Vec::with_capacity(config.n);
    for (li, (pool, n)) in pools.iter().zip(&per_label).enumerate() {
        for idx in index::sample(&mut rng, pool.len(), *n) {
            picks.push((li, idx));
        }
    }
    picks.shuffle(&mut rng);

    let samples: Vec<SftSample> = picks
        .par_iter()
        .map(|&(li, idx)| {
            let label = labels[li];
            let start = pools[li].get(idx).expect("sampled in range");
            let (start, target) = pair_for(board, start, label)?;
            let s = SftSample::build(board, start, target, label, config.seed, config.rationale_stub.as_deref())?;
            s.verify()?;
            Ok(s)
        })
        .collect::<Result<_>>()?;
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    /// `{prompt, completion, label, category, seed}` per line.
    Completion,
    /// `{messages: [system, user, assistant]}` per line.
    Chat,
}

impl FromStr for ExportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "completion" => Ok(ExportFormat::Completion),
            "chat" => Ok(ExportFormat::Chat),
            other => Err(Error::Usage(format!("unknown export format `{other}`"))),
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

pub fn write_dataset<W: Write>(samples: &[SftSample], format: ExportFormat, mut out: W) -> Result<()> {
    for s in samples {
        match format {
            ExportFormat::Completion => serde_json::to_writer(&mut out, s)?,
            ExportFormat::Chat => {
                let system = system_prompt(Mode::Dynamic, &[]);
                let user = s
                    .prompt
                    .strip_prefix(system.as_str())
                    .map(str::to_string)
                    .unwrap_or_else(|| environment_block("", ""));
                let messages = [
                    ChatMessage { role: "system", content: &system },
                    ChatMessage { role: "user", content: &user },
                    ChatMessage { role: "assistant", content: &s.completion },
                ];
                serde_json::to_writer(&mut out, &serde_json::json!({ "messages": messages }))?;
            }
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}
