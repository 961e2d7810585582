use std::collections::{HashMap, HashSet};

use shapeshift::action::ActionLabel;
use shapeshift::generator::{gen_dataset, write_dataset, DatasetConfig, ExportFormat};

mod common;

#[test]
fn default_dataset_meets_the_contract() {
    let b = common::board();
    let config = DatasetConfig::default();
    let data = gen_dataset(&b, &config).unwrap();
    assert_eq!(data.len(), 12_000);

    let keys: HashSet<_> = data.iter().map(|s| s.key().unwrap()).collect();
    assert_eq!(keys.len(), 12_000);

    let mut counts: HashMap<ActionLabel, usize> = HashMap::new();
    for s in &data {
        s.verify().unwrap();
        assert!(s.prompt.ends_with("------------------------------\n"));
        *counts.entry(s.label).or_default() += 1;
    }
    let uniform = 12_000.0 / 8.0;
    for (label, n) in &counts {
        assert!(((*n as f64 - uniform) / uniform).abs() <= 0.02, "{label}: {n}");
    }

    let bytes = |d: &[_]| {
        let mut buf = Vec::new();
        write_dataset(d, ExportFormat::Completion, &mut buf).unwrap();
        buf
    };
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| gen_dataset(&b, &config).unwrap());
    assert_eq!(bytes(&data), bytes(&single));
}

#[test]
fn different_seeds_differ() {
    let b = common::board();
    let a = gen_dataset(&b, &DatasetConfig { n: 50, seed: 1, ..Default::default() }).unwrap();
    let c = gen_dataset(&b, &DatasetConfig { n: 50, seed: 2, ..Default::default() }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn rationale_stub_precedes_the_answer() {
    let b = common::board();
    let config = DatasetConfig { n: 8, rationale_stub: Some("<think>look</think>".into()), ..Default::default() };
    for s in gen_dataset(&b, &config).unwrap() {
        assert_eq!(s.completion, format!("<think>look</think>{}", s.label.as_answer()));
        assert_eq!(shapeshift::action::parse_answer(&s.completion).unwrap(), s.label);
    }
}
