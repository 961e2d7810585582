//! Ground-truth quota plans and the per-step reward rule.
//!
//! All reward arithmetic is exact (rational), so any two orderings of the same
//! quota-respecting actions produce bit-identical totals once converted to `f64`.

use std::collections::BTreeMap;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::action::{ActionLabel, ActionType};
use crate::error::{Error, Result};
use crate::geometry::ShapeState;

/// An exact reward value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Reward(Ratio<i128>);

impl Reward {
    const PARAM_SCALE: i128 = 1_000_000_000;

    pub fn zero() -> Self {
        Reward(Ratio::zero())
    }

    pub fn new(numer: i128, denom: i128) -> Self {
        Reward(Ratio::new(numer, denom))
    }

    /// Converts a configuration constant, keeping nine decimal places exactly.
    pub fn from_param(value: f64) -> Self {
        Reward(Ratio::new(
            (value * Self::PARAM_SCALE as f64).round() as i128,
            Self::PARAM_SCALE,
        ))
    }

    pub fn to_f64(self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    fn div_int(self, d: u32) -> Self {
        Reward(self.0 / Ratio::from_integer(d as i128))
    }
}

impl fmt::Display for Reward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for Reward {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<Ratio<i128>>()
            .map(Reward)
            .map_err(|e| format!("bad reward `{s}`: {e}"))
    }
}

impl Serialize for Reward {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Reward {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Add for Reward {
    type Output = Reward;
    fn add(self, rhs: Reward) -> Reward {
        Reward(self.0 + rhs.0)
    }
}

impl AddAssign for Reward {
    fn add_assign(&mut self, rhs: Reward) {
        self.0 += rhs.0;
    }
}

impl Sub for Reward {
    type Output = Reward;
    fn sub(self, rhs: Reward) -> Reward {
        Reward(self.0 - rhs.0)
    }
}

impl Neg for Reward {
    type Output = Reward;
    fn neg(self) -> Reward {
        Reward(-self.0)
    }
}

impl Sum for Reward {
    fn sum<I: Iterator<Item = Reward>>(iter: I) -> Reward {
        iter.fold(Reward::zero(), Add::add)
    }
}

/// Required count per ground-truth label.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QuotaPlan {
    quotas: BTreeMap<ActionLabel, u32>,
    distance: u32,
}

impl QuotaPlan {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_counts<I: IntoIterator<Item = (ActionLabel, u32)>>(counts: I) -> Result<Self> {
        let mut quotas = BTreeMap::new();
        for (label, n) in counts {
            if label.is_noop() {
                return Err(Error::Usage(format!("`{label}` cannot carry a quota")));
            }
            if n > 0 {
                *quotas.entry(label).or_insert(0) += n;
            }
        }
        let distance = quotas.values().sum();
        Ok(QuotaPlan { quotas, distance })
    }

    pub fn quota(&self, label: ActionLabel) -> u32 {
        self.quotas.get(&label).copied().unwrap_or(0)
    }

    pub fn quotas(&self) -> &BTreeMap<ActionLabel, u32> {
        &self.quotas
    }

    pub fn distance(&self) -> u32 {
        self.distance
    }

    pub fn is_empty(&self) -> bool {
        self.distance == 0
    }

    /// Pooled quota of every label of the given type.
    pub fn type_total(&self, ty: ActionType) -> u32 {
        self.quotas
            .iter()
            .filter(|(l, _)| l.action_type() == ty)
            .map(|(_, n)| n)
            .sum()
    }

    /// Type counts in `<n>t<n>r<n>s` form, e.g. `3t1r1s`.
    pub fn pattern(&self) -> String {
        format!(
            "{}t{}r{}s",
            self.type_total(ActionType::Translation),
            self.type_total(ActionType::Rotation),
            self.type_total(ActionType::Scaling)
        )
    }

    /// Labels whose quota alone would trigger the repetition penalty.
    pub fn repeated_labels(&self, profile: &RewardProfile) -> Vec<ActionLabel> {
        self.quotas
            .iter()
            .filter(|(_, n)| **n > profile.repetition_threshold && profile.repetition_penalty > 0.0)
            .map(|(l, _)| *l)
            .collect()
    }

    /// Labels with quota, each repeated by its count, in vocabulary order.
    pub fn canonical_sequence(&self) -> Vec<ActionLabel> {
        self.quotas
            .iter()
            .flat_map(|(l, n)| std::iter::repeat_n(*l, *n as usize))
            .collect()
    }
}

impl fmt::Display for QuotaPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (l, n)) in self.quotas.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{l}:{n}")?;
        }
        f.write_str("}")
    }
}

/// Greedy decomposition of the state difference into atomic label quotas.
///
/// Rotation is counter-clockwise only: as many quarter turns as fit, then at
/// most one eighth turn. Translation and scaling deltas map one-to-one.
pub fn derive_quota_plan(start: &ShapeState, target: &ShapeState) -> Result<QuotaPlan> {
    if start.shape != target.shape {
        return Err(Error::Unsupported(format!(
            "cannot plan between different shapes `{}` and `{}`",
            start.shape, target.shape
        )));
    }
    let steps = start.orientation.steps_to(target.orientation) as u32;
    let ds = target.scale.exponent() as i32 - start.scale.exponent() as i32;
    let dx = target.col as i64 - start.col as i64;
    let dy = target.row as i64 - start.row as i64;

    let mut counts = vec![
        (ActionLabel::QuarterRotation, steps / 2),
        (ActionLabel::SlightRotation, steps % 2),
    ];
    if ds >= 0 {
        counts.push((ActionLabel::DoubleSize, ds as u32));
    } else {
        counts.push((ActionLabel::HalfSize, (-ds) as u32));
    }
    if dx >= 0 {
        counts.push((ActionLabel::Right, dx as u32));
    } else {
        counts.push((ActionLabel::Left, (-dx) as u32));
    }
    if dy >= 0 {
        counts.push((ActionLabel::Down, dy as u32));
    } else {
        counts.push((ActionLabel::Up, (-dy) as u32));
    }
    QuotaPlan::from_counts(counts)
}

/// How the per-step penalty enters the correctness reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyConvention {
    /// Each operation type nets `1 - per_step_penalty` when completed.
    PerType,
    /// Each type nets 1 and every step pays `per_step_penalty`.
    PerStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardProfile {
    pub name: String,
    pub per_step_penalty: f64,
    pub repetition_penalty: f64,
    pub repetition_threshold: u32,
    pub success_bonus: f64,
    pub invalid_penalty: f64,
    pub penalty_convention: PenaltyConvention,
}

impl RewardProfile {
    pub const FIGURE2: &'static str = "figure2";
    pub const EQ5_LITERAL: &'static str = "eq5-literal";

    /// Nets 0.9 per operation type; the default.
    pub fn figure2() -> Self {
        RewardProfile {
            name: Self::FIGURE2.to_string(),
            per_step_penalty: 0.1,
            repetition_penalty: 0.2,
            repetition_threshold: 2,
            success_bonus: 2.0,
            invalid_penalty: 0.1,
            penalty_convention: PenaltyConvention::PerType,
        }
    }

    /// Correctness normalised to 1 per type, minus 0.1 on every step.
    pub fn eq5_literal() -> Self {
        RewardProfile {
            name: Self::EQ5_LITERAL.to_string(),
            penalty_convention: PenaltyConvention::PerStep,
            ..Self::figure2()
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            Self::FIGURE2 => Ok(Self::figure2()),
            Self::EQ5_LITERAL => Ok(Self::eq5_literal()),
            other => Err(Error::Config(format!("unknown reward profile `{other}`"))),
        }
    }

    /// Parses a key-value document carrying every profile field.
    pub fn from_toml(text: &str) -> Result<Self> {
        let profile: RewardProfile =
            toml::from_str(text).map_err(|e| Error::Config(format!("reward profile: {e}")))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn without_repetition(mut self) -> Self {
        self.repetition_penalty = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("per_step_penalty", self.per_step_penalty),
            ("repetition_penalty", self.repetition_penalty),
            ("success_bonus", self.success_bonus),
            ("invalid_penalty", self.invalid_penalty),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn success_bonus(&self) -> Reward {
        Reward::from_param(self.success_bonus)
    }

    fn step_charge(&self) -> Reward {
        match self.penalty_convention {
            PenaltyConvention::PerType => Reward::zero(),
            PenaltyConvention::PerStep => Reward::from_param(self.per_step_penalty),
        }
    }

    /// Reward for one correct use of `label` under `plan`, before penalties.
    pub fn correct_reward(&self, label: ActionLabel, plan: &QuotaPlan) -> Reward {
        let type_total = plan.type_total(label.action_type());
        if type_total == 0 {
            return Reward::zero();
        }
        let unit = match self.penalty_convention {
            PenaltyConvention::PerType => {
                Reward::new(1, 1) - Reward::from_param(self.per_step_penalty)
            }
            PenaltyConvention::PerStep => Reward::new(1, 1),
        };
        unit.div_int(type_total)
    }
}

impl Default for RewardProfile {
    fn default() -> Self {
        Self::figure2()
    }
}

/// Selections of each label so far in an episode.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UsageCounts(BTreeMap<ActionLabel, u32>);

impl UsageCounts {
    pub fn get(&self, label: ActionLabel) -> u32 {
        self.0.get(&label).copied().unwrap_or(0)
    }

    pub fn record(&mut self, label: ActionLabel) {
        *self.0.entry(label).or_insert(0) += 1;
    }
}

/// Reward for taking `action` given the usage so far (not including this step).
///
/// `None` stands for output that did not parse to a label.
pub fn step_reward(
    action: Option<ActionLabel>,
    plan: &QuotaPlan,
    usage: &UsageCounts,
    profile: &RewardProfile,
) -> Reward {
    let mut reward = -profile.step_charge();
    match action {
        Some(label) if usage.get(label) < plan.quota(label) => {
            reward += profile.correct_reward(label, plan);
        }
        _ => reward += -Reward::from_param(profile.invalid_penalty),
    }
    if let Some(label) = action {
        if usage.get(label) + 1 > profile.repetition_threshold {
            reward += -Reward::from_param(profile.repetition_penalty);
        }
    }
    reward
}

pub fn episode_total(steps: &[Reward], success: bool, profile: &RewardProfile) -> Reward {
    let sum: Reward = steps.iter().copied().sum();
    if success {
        sum + profile.success_bonus()
    } else {
        sum
    }
}

/// Reward of any quota-respecting ordering of `plan`, without the success bonus.
pub fn max_reward(plan: &QuotaPlan, profile: &RewardProfile, horizon: u32) -> Result<Reward> {
    if plan.distance() > horizon {
        return Err(Error::Infeasible {
            distance: plan.distance(),
            horizon,
        });
    }
    let mut usage = UsageCounts::default();
    let mut total = Reward::zero();
    for label in plan.canonical_sequence() {
        total += step_reward(Some(label), plan, &usage, profile);
        usage.record(label);
    }
    Ok(total)
}

/// Running reward state for one episode.
#[derive(Debug, Clone)]
pub struct RewardTracker {
    plan: QuotaPlan,
    profile: RewardProfile,
    usage: UsageCounts,
}

impl RewardTracker {
    pub fn new(plan: QuotaPlan, profile: RewardProfile) -> Self {
        RewardTracker {
            plan,
            profile,
            usage: UsageCounts::default(),
        }
    }

    pub fn score(&mut self, action: Option<ActionLabel>) -> Reward {
        let r = step_reward(action, &self.plan, &self.usage, &self.profile);
        if let Some(label) = action {
            self.usage.record(label);
        }
        r
    }

    pub fn usage(&self) -> &UsageCounts {
        &self.usage
    }

    pub fn plan(&self) -> &QuotaPlan {
        &self.plan
    }

    pub fn profile(&self) -> &RewardProfile {
        &self.profile
    }
}
