//! Random-policy baselines, reward trees, and evaluation reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Duration;

use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::action::{ActionLabel, ActionType};
use crate::agent::{run_episode, Agent, AgentSpec, TemperatureSchedule};
use crate::episode::{EpisodeConfig, EpisodeRecord, Mode, Outcome};
use crate::error::{Error, Result};
use crate::generator::{derive_seed, rng_for};
use crate::geometry::Board;
use crate::reward::{step_reward, QuotaPlan, Reward, RewardProfile, UsageCounts};
use crate::scenario::ScenarioSpec;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        iter.into_iter().for_each(|x| s.add(x));
        s
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().copied().collect::<CompensatedSum>().value() / values.len() as f64
}

/// Which version of the expectation to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalyticForm {
    /// Each label is drawn with probability `1/|A|`.
    #[default]
    Corrected,
    /// Sums the quota probabilities without the selection factor.
    Literal,
}

/// A uniform random policy against a fixed quota plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomPolicyModel {
    /// The labels the policy draws from.
    pub labels: Vec<ActionLabel>,
    pub plan: QuotaPlan,
    pub profile: RewardProfile,
    pub horizon: u32,
}

impl RandomPolicyModel {
    /// `space` is 8 (effective labels) or 11 (all labels). The repetition
    /// penalty is switched off; see [`RandomPolicyModel::with_repetition`].
    pub fn new(plan: QuotaPlan, profile: RewardProfile, space: usize, horizon: u32) -> Result<Self> {
        let labels = match space {
            8 => ActionLabel::EFFECTIVE.to_vec(),
            11 => ActionLabel::ALL.to_vec(),
            other => return Err(Error::Config(format!("action space must be 8 or 11, got {other}"))),
        };
        if plan.quotas().keys().any(|l| !labels.contains(l)) {
            return Err(Error::Config("quota labels outside the action space".into()));
        }
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        profile.validate()?;
        Ok(RandomPolicyModel {
            labels,
            plan,
            profile: profile.without_repetition(),
            horizon,
        })
    }

    /// Keeps the profile's repetition penalty in Monte Carlo runs. The
    /// analytic expectation ignores it.
    pub fn with_repetition(mut self, profile: &RewardProfile) -> Self {
        self.profile.repetition_penalty = profile.repetition_penalty;
        self
    }

    /// Three translations split 2+1, one rotation, one scaling.
    pub fn mixed_five_plan() -> QuotaPlan {
        QuotaPlan::from_counts([
            (ActionLabel::Right, 2),
            (ActionLabel::Up, 1),
            (ActionLabel::QuarterRotation, 1),
            (ActionLabel::DoubleSize, 1),
        ])
        .expect("effective labels")
    }

    pub fn space(&self) -> usize {
        self.labels.len()
    }

    fn fresh_reward(&self, action: Option<ActionLabel>) -> Reward {
        step_reward(action, &self.plan, &UsageCounts::default(), &self.profile)
    }

    /// Reward of an in-quota selection of `label`.
    pub fn correct_value(&self, label: ActionLabel) -> f64 {
        self.fresh_reward(Some(label)).to_f64()
    }

    /// Reward of an out-of-quota or non-plan selection.
    pub fn invalid_value(&self) -> f64 {
        self.fresh_reward(None).to_f64()
    }
}

/// `P(N < c)` for `N ~ Binomial(n, p)`.
pub fn binomial_below(n: u64, p: f64, c: u32) -> f64 {
    if c == 0 {
        return 0.0;
    }
    let dist = Binomial::new(p, n).expect("valid binomial parameters");
    dist.cdf(c as u64 - 1)
}

/// Expected step-`k` reward of the random policy.
pub fn expected_reward_analytic(model: &RandomPolicyModel, k: u32) -> Result<f64> {
    expected_reward_with(model, k, AnalyticForm::Corrected)
}

pub fn expected_reward_with(model: &RandomPolicyModel, k: u32, form: AnalyticForm) -> Result<f64> {
    if !(1..=model.horizon).contains(&k) {
        return Err(Error::Usage(format!("step {k} outside [1, {}]", model.horizon)));
    }
    let p = 1.0 / model.space() as f64;
    let invalid = model.invalid_value();
    let mut gain = CompensatedSum::default();
    let mut valid_prob = CompensatedSum::default();
    for (&label, &quota) in model.plan.quotas() {
        let below = binomial_below(k as u64 - 1, p, quota);
        let weight = match form {
            AnalyticForm::Corrected => p * below,
            AnalyticForm::Literal => below,
        };
        gain.add(model.correct_value(label) * weight);
        valid_prob.add(weight);
    }
    Ok(gain.value() + invalid * (1.0 - valid_prob.value()))
}

/// Expected per-step and cumulative rewards for steps `1..=horizon`.
pub fn analytic_table(model: &RandomPolicyModel, form: AnalyticForm) -> Result<Vec<(f64, f64)>> {
    let mut cum = CompensatedSum::default();
    (1..=model.horizon)
        .map(|k| {
            let e = expected_reward_with(model, k, form)?;
            cum.add(e);
            Ok((e, cum.value()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub trials: u64,
    pub per_step: Vec<Estimate>,
    pub cumulative: Vec<Estimate>,
}

const MC_CHUNK: u64 = 1 << 14;

#[derive(Clone)]
struct Moments {
    sum: Vec<CompensatedSum>,
    sq: Vec<CompensatedSum>,
}

impl Moments {
    fn new(h: usize) -> Self {
        Moments {
            sum: vec![CompensatedSum::default(); h],
            sq: vec![CompensatedSum::default(); h],
        }
    }

    fn add(&mut self, i: usize, x: f64) {
        self.sum[i].add(x);
        self.sq[i].add(x * x);
    }

    fn merge(&mut self, other: &Moments) {
        for i in 0..self.sum.len() {
            self.sum[i].add(other.sum[i].value());
            self.sq[i].add(other.sq[i].value());
        }
    }

    fn estimates(&self, n: u64) -> Vec<Estimate> {
        let n = n as f64;
        (0..self.sum.len())
            .map(|i| {
                let m = self.sum[i].value() / n;
                let var = if n > 1.0 {
                    ((self.sq[i].value() - n * m * m) / (n - 1.0)).max(0.0)
                } else {
                    0.0
                };
                Estimate {
                    mean: m,
                    stderr: (var / n).sqrt(),
                }
            })
            .collect()
    }
}

/// Simulates `trials` episodes of uniform draws scored by the step reward rule.
///
/// Trials are split into fixed chunks with their own seed streams, so the
/// result does not depend on the number of worker threads.
pub fn montecarlo(model: &RandomPolicyModel, trials: u64, seed: u64) -> Result<MonteCarloResult> {
    if trials == 0 {
        return Err(Error::Usage("Monte Carlo needs at least one trial".into()));
    }
    let h = model.horizon as usize;
    let chunks = trials.div_ceil(MC_CHUNK);
    let parts: Vec<(Moments, Moments)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n = MC_CHUNK.min(trials - c * MC_CHUNK);
            let mut rng = rng_for(derive_seed(seed, c));
            let mut step = Moments::new(h);
            let mut cum = Moments::new(h);
            for _ in 0..n {
                let mut usage = UsageCounts::default();
                let mut total = 0.0;
                for i in 0..h {
                    let label = *model.labels.choose(&mut rng).expect("nonempty space");
                    let r = step_reward(Some(label), &model.plan, &usage, &model.profile).to_f64();
                    usage.record(label);
                    total += r;
                    step.add(i, r);
                    cum.add(i, total);
                }
            }
            (step, cum)
        })
        .collect();
    let mut step = Moments::new(h);
    let mut cum = Moments::new(h);
    for (s, c) in &parts {
        step.merge(s);
        cum.merge(c);
    }
    Ok(MonteCarloResult {
        trials,
        per_step: step.estimates(trials),
        cumulative: cum.estimates(trials),
    })
}

/// Mean and standard error of the step-`k` reward.
pub fn expected_reward_montecarlo(model: &RandomPolicyModel, k: u32, trials: u64, seed: u64) -> Result<Estimate> {
    if !(1..=model.horizon).contains(&k) {
        return Err(Error::Usage(format!("step {k} outside [1, {}]", model.horizon)));
    }
    let short = RandomPolicyModel {
        horizon: k,
        ..model.clone()
    };
    Ok(montecarlo(&short, trials, seed)?.per_step[k as usize - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub step: u32,
    pub expected: f64,
    pub cumulative: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<Estimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agrees: Option<bool>,
}

/// Analytic table with an optional Monte Carlo cross-check at 3 standard errors.
pub fn baseline_table(model: &RandomPolicyModel, form: AnalyticForm, trials: u64, seed: u64) -> Result<Vec<BaselineRow>> {
    let analytic = analytic_table(model, form)?;
    let mc = if trials > 0 {
        Some(montecarlo(model, trials, seed)?)
    } else {
        None
    };
    Ok(analytic
        .iter()
        .enumerate()
        .map(|(i, &(expected, cumulative))| {
            let est = mc.as_ref().map(|m| m.per_step[i]);
            BaselineRow {
                step: i as u32 + 1,
                expected,
                cumulative,
                monte_carlo: est,
                agrees: est.map(|e| (e.mean - expected).abs() <= 3.0 * e.stderr.max(1e-12)),
            }
        })
        .collect())
}

pub fn render_baseline(rows: &[BaselineRow], title: &str) -> String {
    let mut out = format!("{title}\n");
    let _ = writeln!(out, "{:>4}  {:>9}  {:>10}  {:>20}", "step", "E[R_k]", "cumulative", "monte carlo");
    for r in rows {
        let mc = match (r.monte_carlo, r.agrees) {
            (Some(e), Some(ok)) => format!("{:.4} ± {:.4} {}", e.mean, e.stderr, if ok { "ok" } else { "MISMATCH" }),
            _ => "-".into(),
        };
        let _ = writeln!(out, "{:>4}  {:>9.3}  {:>10.3}  {:>20}", r.step, r.expected, r.cumulative, mc);
    }
    out
}

// ---------------------------------------------------------------------------
// Reward trees

/// One prefix of a quota-respecting ordering with its cumulative reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub action: Option<ActionLabel>,
    pub cumulative: Reward,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn leaves(&self) -> Vec<(Vec<ActionLabel>, Reward)> {
        let mut out = Vec::new();
        self.collect_leaves(&mut Vec::new(), &mut out);
        out
    }

    fn collect_leaves(&self, prefix: &mut Vec<ActionLabel>, out: &mut Vec<(Vec<ActionLabel>, Reward)>) {
        if let Some(a) = self.action {
            prefix.push(a);
        }
        if self.children.is_empty() {
            out.push((prefix.clone(), self.cumulative));
        }
        for c in &self.children {
            c.collect_leaves(prefix, out);
        }
        if self.action.is_some() {
            prefix.pop();
        }
    }

    /// Cumulative values along the first path whose action types match `types`.
    pub fn values_along(&self, types: &[ActionType]) -> Option<Vec<Reward>> {
        let Some((first, rest)) = types.split_first() else {
            return Some(Vec::new());
        };
        self.children
            .iter()
            .filter(|c| c.action.is_some_and(|a| a.action_type() == *first))
            .find_map(|c| {
                let mut tail = c.values_along(rest)?;
                tail.insert(0, c.cumulative);
                Some(tail)
            })
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(TreeNode::node_count).sum::<usize>()
    }

    /// Indented text listing, one node per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(0, &mut out);
        out
    }

    fn render_into(&self, depth: usize, out: &mut String) {
        let name = self.action.map_or("start", ActionLabel::as_str);
        let _ = writeln!(out, "{}{} {:.1}", "  ".repeat(depth), name, self.cumulative.to_f64());
        for c in &self.children {
            c.render_into(depth + 1, out);
        }
    }
}

/// All quota-respecting orderings of `plan` as a prefix tree. With `root`,
/// only orderings starting with an action of that type are kept.
pub fn reward_tree(plan: &QuotaPlan, profile: &RewardProfile, horizon: u32, root: Option<ActionType>) -> Result<TreeNode> {
    if plan.distance() > horizon {
        return Err(Error::Infeasible {
            distance: plan.distance(),
            horizon,
        });
    }
    let mut node = TreeNode {
        action: None,
        cumulative: Reward::zero(),
        children: Vec::new(),
    };
    grow(&mut node, plan, profile, &mut UsageCounts::default(), root);
    Ok(node)
}

fn grow(node: &mut TreeNode, plan: &QuotaPlan, profile: &RewardProfile, usage: &mut UsageCounts, only: Option<ActionType>) {
    for (&label, &quota) in plan.quotas() {
        if usage.get(label) >= quota || only.is_some_and(|t| t != label.action_type()) {
            continue;
        }
        let r = step_reward(Some(label), plan, usage, profile);
        let mut child = TreeNode {
            action: Some(label),
            cumulative: node.cumulative + r,
            children: Vec::new(),
        };
        let mut next = usage.clone();
        next.record(label);
        grow(&mut child, plan, profile, &mut next, None);
        node.children.push(child);
    }
}

// ---------------------------------------------------------------------------
// Evaluation

pub fn type_code(label: Option<ActionLabel>) -> &'static str {
    match label.map(ActionLabel::action_type) {
        Some(ActionType::Rotation) => "rot",
        Some(ActionType::Translation) => "tr",
        Some(ActionType::Scaling) => "scale",
        None => "invalid",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub index: usize,
    pub scenario_seed: u64,
    pub distance: u32,
    pub pattern: String,
    pub outcome: Outcome,
    pub steps: usize,
    pub total: f64,
    pub total_without_bonus: f64,
    pub type_sequence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceFrequency {
    pub sequence: String,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub agent: String,
    pub mode: Mode,
    pub episodes: Vec<EpisodeSummary>,
    pub mean_total: f64,
    pub mean_without_bonus: f64,
    pub success_rate: f64,
    /// Mean cumulative reward (no bonus) after each step; finished episodes
    /// carry their final value forward.
    pub cumulative_by_step: Vec<f64>,
    pub sequence_frequencies: Vec<SequenceFrequency>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub records: Vec<EpisodeRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub timeout: Duration,
    pub temperature: TemperatureSchedule,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            timeout: crate::agent::DEFAULT_TIMEOUT,
            temperature: TemperatureSchedule::default(),
        }
    }
}

/// Runs every scenario with a fresh agent from `spec`; local agents run in parallel.
pub fn evaluate(
    board: &Board,
    suite: &[ScenarioSpec],
    config: &EpisodeConfig,
    spec: &AgentSpec,
    options: &EvalOptions,
) -> Result<Evaluation> {
    if suite.is_empty() {
        return Err(Error::Usage("the scenario suite is empty".into()));
    }
    let records: Vec<EpisodeRecord> = if spec.is_local() {
        suite
            .par_iter()
            .enumerate()
            .map(|(i, sc)| {
                let mut agent = spec.build(options.timeout)?;
                run_episode(board, sc.clone(), config.clone(), agent.as_mut(), i as u64, options.temperature)
            })
            .collect::<Result<_>>()?
    } else {
        let mut agent = spec.build(options.timeout)?;
        return evaluate_with(board, suite, config, agent.as_mut(), options);
    };
    let name = spec.build(options.timeout).map(|a| a.name()).unwrap_or_default();
    Ok(Evaluation {
        report: summarize(&name, config, &records),
        records,
    })
}

/// Runs every scenario in order with one agent instance.
pub fn evaluate_with(
    board: &Board,
    suite: &[ScenarioSpec],
    config: &EpisodeConfig,
    agent: &mut dyn Agent,
    options: &EvalOptions,
) -> Result<Evaluation> {
    if suite.is_empty() {
        return Err(Error::Usage("the scenario suite is empty".into()));
    }
    let records: Vec<EpisodeRecord> = suite
        .iter()
        .enumerate()
        .map(|(i, sc)| run_episode(board, sc.clone(), config.clone(), agent, i as u64, options.temperature))
        .collect::<Result<_>>()?;
    Ok(Evaluation {
        report: summarize(&agent.name(), config, &records),
        records,
    })
}

pub fn summarize(agent: &str, config: &EpisodeConfig, records: &[EpisodeRecord]) -> EvalReport {
    let episodes: Vec<EpisodeSummary> = records
        .iter()
        .enumerate()
        .map(|(i, r)| EpisodeSummary {
            index: i,
            scenario_seed: r.scenario.seed,
            distance: r.scenario.distance(),
            pattern: r.scenario.plan.pattern(),
            outcome: r.outcome.clone(),
            steps: r.steps.len(),
            total: r.total(),
            total_without_bonus: r.total_without_bonus(),
            type_sequence: r.steps.iter().map(|s| type_code(s.action)).collect::<Vec<_>>().join(">"),
        })
        .collect();
    let totals: Vec<f64> = episodes.iter().map(|e| e.total).collect();
    let without: Vec<f64> = episodes.iter().map(|e| e.total_without_bonus).collect();
    let successes = records.iter().filter(|r| r.outcome.is_success()).count();

    let horizon = config.horizon as usize;
    let cumulative_by_step = (0..horizon)
        .map(|k| {
            let per_episode: Vec<f64> = records
                .iter()
                .map(|r| {
                    r.steps[..(k + 1).min(r.steps.len())]
                        .iter()
                        .map(|s| s.reward_exact)
                        .sum::<Reward>()
                        .to_f64()
                })
                .collect();
            mean(&per_episode)
        })
        .collect();

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &episodes {
        *counts.entry(e.type_sequence.as_str()).or_default() += 1;
    }
    let mut sequence_frequencies: Vec<SequenceFrequency> = counts
        .into_iter()
        .map(|(s, c)| SequenceFrequency {
            sequence: s.to_string(),
            count: c,
            fraction: c as f64 / episodes.len().max(1) as f64,
        })
        .collect();
    sequence_frequencies.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.sequence.cmp(&b.sequence)));

    EvalReport {
        agent: agent.to_string(),
        mode: config.mode,
        mean_total: mean(&totals),
        mean_without_bonus: mean(&without),
        success_rate: successes as f64 / records.len().max(1) as f64,
        episodes,
        cumulative_by_step,
        sequence_frequencies,
    }
}

impl EvalReport {
    /// Aggregate table, optional per-step table, and the most frequent sequences.
    pub fn render_text(&self, with_steps: bool) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<28} {:<8} {:>8} {:>14} {:>9}", "agent", "mode", "episodes", "R_total-R_succ", "success");
        let _ = writeln!(
            out,
            "{:<28} {:<8} {:>8} {:>14.3} {:>8.1}%",
            self.agent,
            self.mode,
            self.episodes.len(),
            self.mean_without_bonus,
            100.0 * self.success_rate
        );
        if with_steps {
            let _ = writeln!(out, "\n{:>4}  {:>10}", "step", "cumulative");
            for (i, v) in self.cumulative_by_step.iter().enumerate() {
                let _ = writeln!(out, "{:>4}  {:>10.3}", i + 1, v);
            }
        }
        let _ = writeln!(out, "\n{:>6}  {:>6}  sequence", "count", "share");
        for f in self.sequence_frequencies.iter().take(10) {
            let _ = writeln!(out, "{:>6}  {:>5.1}%  {}", f.count, 100.0 * f.fraction, f.sequence);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{gen_suite, QuotaPattern, ScenarioConfig};
    use crate::geometry::GridSpec;

    fn paper_model() -> RandomPolicyModel {
        RandomPolicyModel::new(RandomPolicyModel::mixed_five_plan(), RewardProfile::figure2(), 8, 5).unwrap()
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let s: CompensatedSum = [1e16, 1.0, -1e16].into_iter().collect();
        assert_eq!(s.value(), 1.0);
        assert_eq!(mean(&[]), 0.0);
    }

    #[test]
    fn binomial_tail_by_hand() {
        // n = 2, p = 1/8: P(N = 0) = 49/64, P(N <= 1) = 63/64.
        assert!((binomial_below(2, 0.125, 1) - 49.0 / 64.0).abs() < 1e-12);
        assert!((binomial_below(2, 0.125, 2) - 63.0 / 64.0).abs() < 1e-12);
        assert_eq!(binomial_below(0, 0.125, 1), 1.0);
        assert_eq!(binomial_below(3, 0.125, 0), 0.0);
    }

    #[test]
    fn model_values() {
        let m = paper_model();
        assert!((m.correct_value(ActionLabel::Right) - 0.3).abs() < 1e-12);
        assert!((m.correct_value(ActionLabel::DoubleSize) - 0.9).abs() < 1e-12);
        assert!((m.invalid_value() + 0.1).abs() < 1e-12);
    }

    #[test]
    fn first_step_by_substitution() {
        let e = expected_reward_analytic(&paper_model(), 1).unwrap();
        assert!((e - (2.4 / 8.0 - 0.1 * 4.0 / 8.0)).abs() < 1e-12);
        let single = QuotaPlan::from_counts([(ActionLabel::Up, 1)]).unwrap();
        let mut profile = RewardProfile::figure2();
        profile.per_step_penalty = 0.0;
        profile.invalid_penalty = 0.0;
        let m = RandomPolicyModel::new(single, profile, 8, 1).unwrap();
        assert!((expected_reward_analytic(&m, 1).unwrap() - 1.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn analytic_step_range() {
        let m = paper_model();
        assert!(expected_reward_analytic(&m, 0).is_err());
        assert!(expected_reward_analytic(&m, 6).is_err());
    }

    #[test]
    fn analytic_is_non_increasing() {
        let table = analytic_table(&paper_model(), AnalyticForm::Corrected).unwrap();
        for w in table.windows(2) {
            assert!(w[1].0 <= w[0].0);
        }
    }

    #[test]
    fn literal_form_overshoots() {
        let e = expected_reward_with(&paper_model(), 1, AnalyticForm::Literal).unwrap();
        assert!(e > 2.6);
    }

    #[test]
    fn monte_carlo_single_trial_is_in_support() {
        let m = paper_model();
        let est = expected_reward_montecarlo(&m, 1, 1, 3).unwrap();
        let support = [0.3, 0.9, -0.1];
        assert!(support.iter().any(|v| (v - est.mean).abs() < 1e-12));
        assert_eq!(est.stderr, 0.0);
        assert!(montecarlo(&m, 0, 0).is_err());
    }

    #[test]
    fn monte_carlo_is_chunk_deterministic() {
        let m = paper_model();
        let a = montecarlo(&m, 40_000, 5).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| montecarlo(&m, 40_000, 5).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn tree_of_empty_plan_is_a_root() {
        let t = reward_tree(&QuotaPlan::empty(), &RewardProfile::figure2(), 5, None).unwrap();
        assert_eq!(t.node_count(), 1);
        assert_eq!(t.leaves(), vec![(vec![], Reward::zero())]);
    }

    #[test]
    fn tree_leaf_count_is_multinomial() {
        let plan = RandomPolicyModel::mixed_five_plan();
        let t = reward_tree(&plan, &RewardProfile::figure2(), 5, None).unwrap();
        assert_eq!(t.leaves().len(), 60);
        let rooted = reward_tree(&plan, &RewardProfile::figure2(), 5, Some(ActionType::Scaling)).unwrap();
        assert_eq!(rooted.leaves().len(), 12);
        assert!(reward_tree(&plan, &RewardProfile::figure2(), 4, None).is_err());
    }

    #[test]
    fn evaluation_aggregates_are_consistent() {
        let board = Board::with_builtin(GridSpec::default()).unwrap();
        let sc = ScenarioConfig {
            pattern: Some(QuotaPattern::mixed_five()),
            ..Default::default()
        };
        let suite = gen_suite(&board, 2, 20, &sc).unwrap();
        let config = EpisodeConfig::default();
        let ev = evaluate(&board, &suite, &config, &AgentSpec::Random { seed: 1, full_space: false }, &Default::default()).unwrap();
        let r = &ev.report;
        assert_eq!(r.episodes.len(), 20);
        let m = mean(&r.episodes.iter().map(|e| e.total).collect::<Vec<_>>());
        assert_eq!(r.mean_total, m);
        assert_eq!(r.sequence_frequencies.iter().map(|f| f.count).sum::<usize>(), 20);
        let again = evaluate(&board, &suite, &config, &AgentSpec::Random { seed: 1, full_space: false }, &Default::default()).unwrap();
        assert_eq!(ev, again);
        assert!(r.render_text(true).contains("cumulative"));
    }

    #[test]
    fn empty_suite_is_a_usage_error() {
        let board = Board::with_builtin(GridSpec::default()).unwrap();
        let e = evaluate(&board, &[], &EpisodeConfig::default(), &AgentSpec::Oracle, &Default::default());
        assert!(matches!(e, Err(Error::Usage(_))));
    }
}
