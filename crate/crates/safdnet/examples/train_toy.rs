//! Train the full network on a tiny linearly separable task (flat noise
//! vs an added tone) and watch dev AUROC converge within a few epochs.
//!
//! Run with: cargo run --release --example train_toy

use safdnet::model::{Ablation, ConvSpec, HyperConfig, ModelParams};
use safdnet::numerics::Tensor;
use safdnet::rng::Rng;
use safdnet::signal_io::{Label, Segment};
use safdnet::training::{train, TrainConfig};

fn toy_segments(n: usize, seed: u64) -> Vec<Segment> {
    let mut rng = Rng::seed_from(seed);
    (0..n)
        .map(|i| {
            let label = i % 2;
            let mut data = Tensor::<f32>::zeros(&[2, 64]);
            for c in 0..2 {
                for t in 0..64 {
                    let mut v = 0.3 * rng.gauss();
                    if label == 1 {
                        v += (2.0 * std::f64::consts::PI * 8.0 * t as f64 / 64.0).sin();
                    }
                    data.set2(c, t, v as f32);
                }
            }
            Segment {
                data,
                t_start: 0.0,
                case_id: format!("toy_{}", i),
                label: if label == 1 { Label::Hypotension } else { Label::Nonhypotension },
                horizon_min: 5,
                rejected_reason: None,
            }
        })
        .collect()
}

fn main() {
    let hyper = HyperConfig {
        channels: 2,
        window_len: 64,
        conv: vec![
            ConvSpec { kernel: 5, stride: 2, out_channels: 8 },
            ConvSpec { kernel: 5, stride: 2, out_channels: 8 },
        ],
        lstm_hidden: 8,
        lstm_pool: 4,
        d_k: 8,
        d_v: 8,
        dropout_p: 0.1,
        horizon_min: 5,
        standardize: true,
    };
    let train_set = toy_segments(200, 11);
    let dev_set = toy_segments(60, 12);
    println!(
        "toy task: {} train / {} dev segments, T=64, C=2",
        train_set.len(),
        dev_set.len()
    );

    let cfg = TrainConfig {
        max_epochs: 20,
        batch_size: 16,
        seed: 5,
        threads: 4,
        ..TrainConfig::default()
    };
    let init = ModelParams::<f64>::init(hyper, Ablation::Full, 21);
    let (best, log) = train(&train_set, &dev_set, init, &cfg).expect("training runs");

    println!("\nepoch  train_loss  dev_auroc  wall_s");
    for e in &log.epochs {
        println!(
            "{:>5}  {:>10.4}  {:>9.4}  {:>6.2}{}",
            e.epoch,
            e.train_loss,
            e.dev_auroc,
            e.wall_s,
            if e.epoch == log.best_epoch { "  <- best" } else { "" }
        );
    }
    println!(
        "\nbest checkpoint from epoch {} with dev AUROC {:.4}",
        log.best_epoch, log.epochs[log.best_epoch].dev_auroc
    );
    let _ = best;
}
