#![allow(dead_code)]

use std::collections::HashSet;

use shapeshift::action::ActionLabel;
use shapeshift::generator::{decompositions, rng_for, QuotaPattern, ScenarioConfig};
use shapeshift::geometry::{Board, GridSpec};
use shapeshift::reward::QuotaPlan;

use rand::seq::IndexedRandom;
use rand::Rng;

pub fn board() -> Board {
    Board::with_builtin(GridSpec::default()).unwrap()
}

pub fn pattern_config() -> ScenarioConfig {
    ScenarioConfig {
        pattern: Some(QuotaPattern::mixed_five()),
        ..Default::default()
    }
}

/// `n` distinct quota plans with distance in `1..=5`.
pub fn random_plans(n: usize, seed: u64) -> Vec<QuotaPlan> {
    let mut rng = rng_for(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    while out.len() < n {
        let d = rng.random_range(1..=5u32);
        let plan = decompositions(d).choose(&mut rng).unwrap().clone();
        if seen.insert(plan.to_string()) {
            out.push(plan);
        }
    }
    out
}

/// Exact cumulative expectations under the published parameters, derived by
/// enumerating all 8^5 label sequences with rational arithmetic.
pub fn enumerated_cumulative(plan: &QuotaPlan, per_label: impl Fn(ActionLabel) -> f64, invalid: f64) -> Vec<f64> {
    let labels = ActionLabel::EFFECTIVE;
    let mut sums = [0.0f64; 5];
    let total = 8usize.pow(5);
    for code in 0..total {
        let mut c = code;
        let mut used = std::collections::HashMap::new();
        let mut cum = 0.0;
        for sum in sums.iter_mut() {
            let l = labels[c % 8];
            c /= 8;
            let n = used.entry(l).or_insert(0u32);
            cum += if *n < plan.quota(l) { per_label(l) } else { invalid };
            *n += 1;
            *sum += cum;
        }
    }
    sums.iter().map(|s| s / total as f64).collect()
}
