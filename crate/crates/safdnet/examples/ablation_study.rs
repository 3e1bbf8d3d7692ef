//! Train every ablation variant on the spectral-tone benchmark and
//! compare held-out AUROC, mirroring the ablation comparison table.
//!
//! Run with: cargo run --release --example ablation_study [n_cases] [seeds]
//!
//! Defaults are small so the example finishes in a couple of minutes;
//! the acceptance suite runs the full-size version.

use safdnet::benchmark;
use safdnet::evaluation::{classify_metrics, roc_auc};
use safdnet::model::{Ablation, ModelParams};
use safdnet::training::{score_segments, train};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_cases: usize = args.first().and_then(|a| a.parse().ok()).unwrap_or(160);
    let n_seeds: u64 = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(1);

    let mut spec = benchmark::BenchmarkSpec {
        n_cases,
        seed: 2024,
        threads: 4,
        ..benchmark::BenchmarkSpec::default()
    };
    if let Some(sigma) = args.get(2).and_then(|a| a.parse::<f64>().ok()) {
        spec.noise.abp = sigma;
    }
    let epochs_override: Option<usize> = args.get(3).and_then(|a| a.parse().ok());
    let lr_override: Option<f64> = args.get(4).and_then(|a| a.parse().ok());
    let variants: Vec<Ablation> = match args.get(5) {
        Some(list) => list
            .split(',')
            .map(|s| s.parse().expect("known ablation name"))
            .collect(),
        None => Ablation::ALL.to_vec(),
    };
    println!(
        "building benchmark: {} cases (tone bin {})...",
        spec.n_cases,
        benchmark::tone_bin(500)
    );
    let t0 = std::time::Instant::now();
    let data = benchmark::build(&spec);
    let counts = |segs: &[safdnet::signal_io::Segment]| {
        let pos = segs
            .iter()
            .filter(|s| s.label == safdnet::signal_io::Label::Hypotension)
            .count();
        (pos, segs.len() - pos)
    };
    println!(
        "  train {:?} / dev {:?} / test {:?} (pos, neg) in {:.1} s",
        counts(&data.train),
        counts(&data.dev),
        counts(&data.test),
        t0.elapsed().as_secs_f64()
    );
    let test_labels: Vec<f64> = data
        .test
        .iter()
        .map(|s| s.label.as_f64().expect("labeled"))
        .collect();

    println!("\nmodel            seed  auroc   accuracy  f1      train_s");
    let mut means = std::collections::BTreeMap::new();
    for seed_idx in 0..n_seeds {
        let seed = 100 + seed_idx;
        for &ablation in &variants {
            let t1 = std::time::Instant::now();
            let init = ModelParams::<f32>::init(benchmark::hyper(), ablation, seed);
            let mut cfg = benchmark::train_config(seed, 4);
            if let Some(epochs) = epochs_override {
                cfg.max_epochs = epochs;
                cfg.patience = (epochs / 2).max(2);
            }
            if let Some(lr) = lr_override {
                cfg.lr = lr;
            }
            let (best, log) = train(&data.train, &data.dev, init, &cfg).expect("training runs");
            let scores = score_segments(&best, &data.test, 4).expect("scoring runs");
            let auroc = roc_auc(&scores, &test_labels).expect("both classes in test");
            let m = classify_metrics(&scores, &test_labels, 0.5);
            println!(
                "{:<16} {:<5} {:.4}  {:.4}    {:.4}  {:.1} ({} epochs)",
                ablation.name(),
                seed,
                auroc,
                m.accuracy,
                m.f1,
                t1.elapsed().as_secs_f64(),
                log.epochs.len()
            );
            means
                .entry(ablation.name())
                .and_modify(|v: &mut (f64, u64)| {
                    v.0 += auroc;
                    v.1 += 1;
                })
                .or_insert((auroc, 1));
        }
    }

    println!("\nmean test AUROC over {} seed(s):", n_seeds);
    for (name, (sum, count)) in &means {
        println!("  {:<16} {:.4}", name, sum / *count as f64);
    }
    if let (Some((fs, fc)), Some((ns, nc))) = (means.get("full"), means.get("no_safb")) {
        println!(
            "\nadaptive-filter margin (full − no_safb): {:+.4}",
            fs / *fc as f64 - ns / *nc as f64
        );
    }
}
