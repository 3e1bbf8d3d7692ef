//! CLI-level integration: subcommand flows, exit codes, file formats, and
//! the split guard, all driven through `cli::dispatch` on temp dirs.

use std::fs;
use std::path::{Path, PathBuf};

use safdnet::cli::dispatch;
use safdnet::numerics::Tensor;
use safdnet::rng::Rng;
use safdnet::signal_io::{read_segments, write_segments, Label, Segment};

fn run(args: &[&str]) -> i32 {
    let argv: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    dispatch(&argv)
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Tiny separable archives (constant noise vs added tone), enough to push
/// the train/eval/ablate/explain subcommands through their file formats.
fn write_toy_archives(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let make = |n: usize, seed: u64| -> Vec<Segment> {
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
                    label: if label == 1 {
                        Label::Hypotension
                    } else {
                        Label::Nonhypotension
                    },
                    horizon_min: 5,
                    rejected_reason: None,
                }
            })
            .collect()
    };
    let train = dir.join("train.safd");
    let dev = dir.join("dev.safd");
    let test = dir.join("test.safd");
    write_segments(&train, &make(48, 1)).unwrap();
    write_segments(&dev, &make(24, 2)).unwrap();
    write_segments(&test, &make(24, 3)).unwrap();
    (train, dev, test)
}

#[test]
fn help_paths_exit_zero() {
    assert_eq!(run(&["--help"]), 0);
    for sub in ["synth", "ingest", "label", "train", "eval", "ablate", "explain"] {
        assert_eq!(run(&[sub, "--help"]), 0, "{} --help", sub);
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["frobnicate"]), 1);
    assert_eq!(run(&["synth", "--bogus-flag", "3"]), 1);
    assert_eq!(run(&["synth"]), 1); // missing --out
    assert_eq!(run(&["label", "--in", "x", "--out", "y", "--horizon", "7"]), 1);
    assert_eq!(run(&["train", "--train", "a", "--dev", "b", "--out", "c", "--ablation", "wat"]), 1);
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(&["ingest", "--in", &path_str(&dir.path().join("missing")), "--out", &path_str(&dir.path().join("out"))]),
        2
    );
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        assert_eq!(
            run(&[
                "synth", "--out", &path_str(out), "--cases", "2", "--seed", "7",
                "--duration", "150", "--events", "0", "--jobs", "2",
            ]),
            0
        );
        assert!(out.join("resolved_config.json").exists());
    }
    for case in ["case_0000", "case_0001"] {
        let wa = fs::read(a.join(case).join("waveform.csv")).unwrap();
        let wb = fs::read(b.join(case).join("waveform.csv")).unwrap();
        assert_eq!(wa, wb, "{} differs between same-seed runs", case);
    }
    // A different seed changes the waveforms.
    let c = dir.path().join("c");
    assert_eq!(
        run(&[
            "synth", "--out", &path_str(&c), "--cases", "1", "--seed", "8",
            "--duration", "150", "--events", "0",
        ]),
        0
    );
    assert_ne!(
        fs::read(a.join("case_0000/waveform.csv")).unwrap(),
        fs::read(c.join("case_0000/waveform.csv")).unwrap()
    );
}

#[test]
fn label_balances_and_tags_splits() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    let labeled = dir.path().join("labeled");
    assert_eq!(
        run(&[
            "synth", "--out", &path_str(&raw), "--cases", "6", "--seed", "3",
            "--duration", "900", "--events", "1", "--lead", "120", "--jobs", "2",
        ]),
        0
    );
    assert_eq!(
        run(&[
            "label", "--in", &path_str(&raw), "--out", &path_str(&labeled),
            "--horizon", "3,5", "--seed", "11",
        ]),
        0
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(labeled.join("dataset.json")).unwrap()).unwrap();
    assert_eq!(manifest["horizons_min"], serde_json::json!([3, 5]));
    assert_eq!(manifest["case_splits"].as_object().unwrap().len(), 6);

    for h in ["h03", "h05"] {
        for split in ["train", "dev", "test"] {
            let file = labeled.join(format!("{}_{}.safd", h, split));
            assert!(file.exists(), "{:?}", file);
            let segs = read_segments(&file).unwrap();
            let pos = segs.iter().filter(|s| s.label == Label::Hypotension).count();
            let neg = segs.len() - pos;
            if pos > 0 {
                assert!(neg <= 2 * pos, "{} {}: {} negatives for {} positives", h, split, neg, pos);
            }
            for s in &segs {
                assert_eq!(s.data.shape(), &[4, 3000]);
            }
        }
    }
    // Re-labeling with the same seed reproduces identical archives.
    let labeled2 = dir.path().join("labeled2");
    assert_eq!(
        run(&[
            "label", "--in", &path_str(&raw), "--out", &path_str(&labeled2),
            "--horizon", "3,5", "--seed", "11",
        ]),
        0
    );
    assert_eq!(
        fs::read(labeled.join("h03_train.safd")).unwrap(),
        fs::read(labeled2.join("h03_train.safd")).unwrap()
    );
}

#[test]
fn train_guard_refuses_test_archives() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    let labeled = dir.path().join("labeled");
    assert_eq!(
        run(&[
            "synth", "--out", &path_str(&raw), "--cases", "4", "--seed", "5",
            "--duration", "700", "--events", "1", "--lead", "90", "--jobs", "2",
        ]),
        0
    );
    assert_eq!(
        run(&[
            "label", "--in", &path_str(&raw), "--out", &path_str(&labeled),
            "--horizon", "3", "--seed", "2",
        ]),
        0
    );
    let code = run(&[
        "train",
        "--train", &path_str(&labeled.join("h03_test.safd")),
        "--dev", &path_str(&labeled.join("h03_dev.safd")),
        "--out", &path_str(&dir.path().join("model")),
        "--epochs", "1",
    ]);
    assert_eq!(code, 2, "training on the test split must be a data error");
}

#[test]
fn train_eval_explain_roundtrip_on_toy_archives() {
    let dir = tempfile::tempdir().unwrap();
    let (train, dev, _test) = write_toy_archives(dir.path());
    let model = dir.path().join("model");
    let code = run(&[
        "train",
        "--train", &path_str(&train),
        "--dev", &path_str(&dev),
        "--out", &path_str(&model),
        "--seed", "21", "--epochs", "4", "--batch", "8", "--threads", "2",
    ]);
    assert_eq!(code, 0);
    assert!(model.join("checkpoint.json").exists());
    assert!(model.join("checkpoint.bin").exists());
    assert!(model.join("train_log.csv").exists());
    assert!(model.join("resolved_config.json").exists());
    let log = fs::read_to_string(model.join("train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,train_loss,dev_auroc,wall_s\n"));

    let report_dir = dir.path().join("report");
    let code = run(&[
        "eval",
        "--checkpoint", &path_str(&model),
        "--data", &path_str(&dev),
        "--out", &path_str(&report_dir),
        "--boot", "100", "--seed", "3",
    ]);
    assert_eq!(code, 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(report_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["n"], serde_json::json!(24));
    assert!(report["auroc"]["point"].as_f64().unwrap() > 0.5);
    for f in ["roc.csv", "pr.csv", "calibration.csv"] {
        assert!(report_dir.join(f).exists());
    }
    let calib = fs::read_to_string(report_dir.join("calibration.csv")).unwrap();
    assert!(calib.starts_with("bin_lo,bin_hi,mean_pred,frac_pos,count\n"));
    assert_eq!(calib.lines().count(), 11);

    // Platt recalibration path.
    let report2 = dir.path().join("report_platt");
    let code = run(&[
        "eval",
        "--checkpoint", &path_str(&model),
        "--data", &path_str(&dev),
        "--out", &path_str(&report2),
        "--boot", "100", "--platt-dev", &path_str(&dev),
    ]);
    assert_eq!(code, 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(report2.join("report.json")).unwrap()).unwrap();
    assert!(report["platt"]["a"].is_number());

    // Mask and saliency exports.
    let explain_dir = dir.path().join("explain");
    let code = run(&[
        "explain",
        "--checkpoint", &path_str(&model),
        "--out", &path_str(&explain_dir),
        "--mask", "--saliency", "0",
        "--data", &path_str(&dev),
        "--svg",
    ]);
    assert_eq!(code, 0);
    let mask = fs::read_to_string(explain_dir.join("mask.csv")).unwrap();
    assert!(mask.starts_with("freq_hz,"));
    assert_eq!(mask.lines().count(), 1 + 33); // F = 64/2 + 1 bins
    assert!(explain_dir.join("saliency.csv").exists());
    assert!(explain_dir.join("mask.svg").exists());
    assert!(explain_dir.join("saliency.svg").exists());
}

#[test]
fn explain_mask_on_no_safb_checkpoint_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (train, dev, _) = write_toy_archives(dir.path());
    let model = dir.path().join("model");
    assert_eq!(
        run(&[
            "train",
            "--train", &path_str(&train),
            "--dev", &path_str(&dev),
            "--out", &path_str(&model),
            "--epochs", "1", "--ablation", "no_safb", "--threads", "2",
        ]),
        0
    );
    let code = run(&[
        "explain",
        "--checkpoint", &path_str(&model),
        "--out", &path_str(&dir.path().join("x")),
        "--mask",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn eval_with_too_few_samples_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let (train, dev, _) = write_toy_archives(dir.path());
    let tiny = dir.path().join("tiny.safd");
    let segs = read_segments(&dev).unwrap();
    write_segments(&tiny, &segs[..6]).unwrap();
    let model = dir.path().join("model");
    assert_eq!(
        run(&[
            "train", "--train", &path_str(&train), "--dev", &path_str(&dev),
            "--out", &path_str(&model), "--epochs", "1", "--threads", "2",
        ]),
        0
    );
    let code = run(&[
        "eval", "--checkpoint", &path_str(&model), "--data", &path_str(&tiny),
        "--out", &path_str(&dir.path().join("r")),
    ]);
    assert_eq!(code, 3);
}

#[test]
fn ablate_emits_comparison_table() {
    let dir = tempfile::tempdir().unwrap();
    let (train, dev, test) = write_toy_archives(dir.path());
    let out = dir.path().join("ablation");
    let code = run(&[
        "ablate",
        "--train", &path_str(&train),
        "--dev", &path_str(&dev),
        "--test", &path_str(&test),
        "--out", &path_str(&out),
        "--seed", "5", "--seeds", "1", "--epochs", "2", "--batch", "8",
        "--threads", "2",
    ]);
    assert_eq!(code, 0);
    let table = fs::read_to_string(out.join("ablation.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "model,horizon_min,auroc,accuracy,f1");
    assert_eq!(lines.len(), 5, "one row per ablation variant:\n{}", table);
    for (i, name) in ["full", "no_safb", "no_cross_attn", "single_path"].iter().enumerate() {
        assert!(lines[i + 1].starts_with(name), "{}", lines[i + 1]);
    }
    assert!(out.join("ablation_runs.csv").exists());
    assert!(out.join("resolved_config.json").exists());
}

#[test]
fn config_file_layers_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    fs::write(
        &cfg_path,
        r#"{ "cases": 3, "synth": { "duration_s": 150.0, "hr_bpm": 75.0, "base_map_mmhg": 90.0,
             "pulse_pressure_mmhg": 40.0, "n_events": 0, "precursor_lead_s": 60.0,
             "precursor_kind": "pp_decay",
             "noise_sigma": { "abp": 1.0, "ecg": 0.02, "ppg": 0.02, "co2": 0.5 },
             "sample_rate_hz": 100.0, "seed": 1 } }"#,
    )
    .unwrap();

    // Config alone: 3 cases.
    let out1 = dir.path().join("out1");
    assert_eq!(
        run(&["synth", "--config", &path_str(&cfg_path), "--out", &path_str(&out1)]),
        0
    );
    assert_eq!(fs::read_dir(&out1).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count(), 3);

    // Flag wins over config.
    let out2 = dir.path().join("out2");
    assert_eq!(
        run(&["synth", "--config", &path_str(&cfg_path), "--out", &path_str(&out2), "--cases", "2"]),
        0
    );
    assert_eq!(fs::read_dir(&out2).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count(), 2);

    // The resolved config records the effective value.
    let resolved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out2.join("resolved_config.json")).unwrap())
            .unwrap();
    assert_eq!(resolved["cases"], serde_json::json!(2));
}
