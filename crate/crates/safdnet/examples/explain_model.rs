//! Train a small model on tone-vs-noise segments, then export what it
//! learned: the frequency-importance mask and a Grad-CAM sensitivity map.
//!
//! Run with: cargo run --release --example explain_model [out_dir]

use safdnet::explain::{export_filter_mask, heatmap_svg, mask_csv, saliency_csv, sensitivity_map};
use safdnet::model::{Ablation, ConvSpec, HyperConfig, ModelParams};
use safdnet::numerics::Tensor;
use safdnet::rng::Rng;
use safdnet::signal_io::{Label, Segment};
use safdnet::training::{train, TrainConfig};

fn segments(n: usize, seed: u64) -> Vec<Segment> {
    let mut rng = Rng::seed_from(seed);
    (0..n)
        .map(|i| {
            let label = i % 2;
            let mut data = Tensor::<f32>::zeros(&[2, 128]);
            for c in 0..2 {
                for t in 0..128 {
                    // 3 Hz-equivalent background everyone shares.
                    let ts = t as f64 / 100.0;
                    let mut v = (2.0 * std::f64::consts::PI * 3.0 * ts).sin() + 1.2 * rng.gauss();
                    if label == 1 && c == 0 {
                        // Class-discriminative 25 Hz tone on channel 0.
                        v += 0.35 * (2.0 * std::f64::consts::PI * 25.0 * ts).sin();
                    }
                    data.set2(c, t, v as f32);
                }
            }
            Segment {
                data,
                t_start: 0.0,
                case_id: format!("xp_{}", i),
                label: if label == 1 { Label::Hypotension } else { Label::Nonhypotension },
                horizon_min: 5,
                rejected_reason: None,
            }
        })
        .collect()
}

fn main() {
    let out = std::path::PathBuf::from(
        std::env::args().nth(1).unwrap_or_else(|| "target/explain_demo".to_string()),
    );
    std::fs::create_dir_all(&out).expect("create out dir");

    let hyper = HyperConfig {
        channels: 2,
        window_len: 128,
        conv: vec![
            ConvSpec { kernel: 5, stride: 2, out_channels: 16 },
            ConvSpec { kernel: 5, stride: 2, out_channels: 16 },
        ],
        lstm_hidden: 16,
        lstm_pool: 4,
        d_k: 16,
        d_v: 16,
        dropout_p: 0.1,
        horizon_min: 5,
        standardize: true,
    };
    let train_set = segments(400, 1);
    let dev_set = segments(80, 2);
    println!("training on {} segments (25 Hz tone on channel 0 marks positives)...", train_set.len());
    let cfg = TrainConfig {
        max_epochs: 25,
        batch_size: 16,
        seed: 9,
        threads: 4,
        ..TrainConfig::default()
    };
    let init = ModelParams::<f64>::init(hyper, Ablation::Full, 3);
    let (model, log) = train(&train_set, &dev_set, init, &cfg).expect("training runs");
    println!(
        "best dev AUROC {:.4} at epoch {}",
        log.epochs[log.best_epoch].dev_auroc, log.best_epoch
    );

    // The learned mask, as CSV and heatmap.
    let export = export_filter_mask(&model).expect("full model has a mask");
    std::fs::write(out.join("mask.csv"), mask_csv(&export)).unwrap();
    let (c, f) = export.mask_shape;
    let matrix = Tensor::from_vec(&[c, f], export.mask.clone());
    std::fs::write(
        out.join("mask.svg"),
        heatmap_svg(&matrix, &export.channel_names, "frequency-importance mask"),
    )
    .unwrap();

    // Where did the mask open up? Report the strongest bins per channel.
    for ch in 0..c {
        let row = export.channel_row(ch);
        let mut ranked: Vec<(usize, f64)> = row.iter().cloned().enumerate().collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let top: Vec<String> = ranked
            .iter()
            .take(3)
            .map(|(k, m)| format!("{:.1} Hz ({:.2})", export.freqs_hz[*k], m))
            .collect();
        println!("channel {} strongest mask bins: {}", ch, top.join(", "));
    }

    // Grad-CAM style sensitivity for one positive segment.
    let seg = &dev_set[1];
    let map = sensitivity_map(&model, seg).expect("saliency");
    std::fs::write(out.join("saliency.csv"), saliency_csv(&map, &["ch0", "ch1"])).unwrap();
    let ch0_mean: f64 = map.saliency.row(0).iter().sum::<f64>() / 128.0;
    let ch1_mean: f64 = map.saliency.row(1).iter().sum::<f64>() / 128.0;
    println!(
        "saliency mass: tone channel {:.4} vs other channel {:.4} (p = {:.3})",
        ch0_mean, ch1_mean, map.predicted_p
    );
    println!("wrote mask.csv, mask.svg, saliency.csv under {}", out.display());
}
