use gkbm::harness::{
    disconnect_experiment, emit, run_sweep, run_sweep_with_workers, write_csv, ExperimentConfig, Metric, OutputFormat,
};
use gkbm::Kernel;

const GOLDEN_CONFIG: &str = r#"{
  "cells": [
    {"lambda": 2.0, "p": 0.9, "q": 0.1, "kernel": {"shape": "indicator", "kappa": 1.0}, "n": 200},
    {"lambda": 1.5, "p": 0.7, "q": 0.3, "kernel": {"shape": "triangular", "kappa": 1.5}, "n": 200}
  ],
  "seeds_per_cell": 2,
  "seed": 7,
  "metrics": ["exact_rate", "agreement_fraction", "phase1_error_count", "disconnect_rate", "edge_count"]
}"#;

fn csv_bytes(cfg: &ExperimentConfig, workers: usize) -> Vec<u8> {
    let results = run_sweep_with_workers(cfg, workers).unwrap();
    let mut buf = Vec::new();
    write_csv(&results, &cfg.metric_columns(), &mut buf).unwrap();
    buf
}

#[test]
fn golden_csv_snapshot() {
    let cfg = ExperimentConfig::from_json(GOLDEN_CONFIG).unwrap();
    let got = String::from_utf8(csv_bytes(&cfg, 1)).unwrap();
    let expected = include_str!("golden/sweep_two_cells.csv");
    assert_eq!(got, expected);
}

#[test]
fn replication_and_parallel_invariance() {
    let cfg = ExperimentConfig::from_json(GOLDEN_CONFIG).unwrap();
    let one = csv_bytes(&cfg, 1);
    assert_eq!(one, csv_bytes(&cfg, 1));
    assert_eq!(one, csv_bytes(&cfg, 3));
}

#[test]
fn svg_is_well_formed() {
    let cfg = ExperimentConfig::from_json(GOLDEN_CONFIG).unwrap();
    let results = run_sweep(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("phase.svg");
    emit(&results, &cfg.metric_columns(), OutputFormat::Svg, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    assert!(doc.descendants().filter(|n| n.has_tag_name("circle")).count() == 2);
    assert!(emit(&results, &[Metric::EdgeCount], OutputFormat::Svg, &path).is_ok());
}

#[test]
fn svg_needs_exact_rate() {
    let mut cfg = ExperimentConfig::from_json(GOLDEN_CONFIG).unwrap();
    cfg.metrics = vec![Metric::EdgeCount];
    let results = run_sweep(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(emit(&results, &cfg.metric_columns(), OutputFormat::Svg, &dir.path().join("x.svg")).is_err());
}

/// Probability of two empty blocks at cyclic gap at least 2, by enumerating
/// all empty/occupied patterns with independent Poisson block counts.
fn enumerated_disconnect_probability(lambda: f64, kappa: f64, n: u64) -> (f64, usize) {
    let nf = n as f64;
    let width = kappa * nf.ln() / nf;
    let b = (1.0 / width).ceil() as usize;
    let widths: Vec<f64> = (0..b).map(|i| if i + 1 < b { width } else { 1.0 - width * (b - 1) as f64 }).collect();
    let empty: Vec<f64> = widths.iter().map(|w| (-lambda * nf * w).exp()).collect();
    let mut total = 0.0;
    for mask in 0u32..(1 << b) {
        let prob: f64 = (0..b).map(|i| if mask >> i & 1 == 1 { empty[i] } else { 1.0 - empty[i] }).product();
        let separated = (0..b).any(|i| {
            (i + 1..b).any(|j| {
                let d = j - i;
                mask >> i & 1 == 1 && mask >> j & 1 == 1 && d.min(b - d) >= 2
            })
        });
        if separated {
            total += prob;
        }
    }
    (total, b)
}

#[test]
fn disconnection_matches_enumeration() {
    let (lambda, kappa, n) = (0.1, 1.5, 20);
    let (exact, b) = enumerated_disconnect_probability(lambda, kappa, n);
    assert_eq!(b, 5);
    let r = disconnect_experiment(lambda, &Kernel::indicator(kappa).unwrap(), n, 20_000, 3).unwrap();
    assert_eq!(r.block_count, b);
    assert!((r.rate - exact).abs() <= 3.0 * r.standard_error, "mc {} exact {exact}", r.rate);
}

#[test]
fn trials_must_be_positive() {
    assert!(disconnect_experiment(1.0, &Kernel::indicator(1.0).unwrap(), 100, 0, 0).is_err());
}
