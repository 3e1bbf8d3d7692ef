//! The whole lifecycle through the command-line surface: generate cases,
//! resample, label, train, evaluate, and export explanations, all inside
//! a scratch directory.
//!
//! Run with: cargo run --release --example full_pipeline

use safdnet::cli::dispatch;

fn run(args: &[&str]) {
    println!("\n$ safdnet {}", args.join(" "));
    let argv: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    let code = dispatch(&argv);
    assert_eq!(code, 0, "step failed with exit code {}", code);
}

fn main() {
    let root = std::env::temp_dir().join(format!("safdnet_demo_{}", std::process::id()));
    std::fs::create_dir_all(&root).unwrap();
    let p = |s: &str| root.join(s).display().to_string();

    run(&[
        "synth", "--out", &p("raw"), "--cases", "10", "--seed", "7",
        "--duration", "900", "--events", "1", "--lead", "120",
        "--rate", "500", "--jobs", "4",
    ]);
    run(&["ingest", "--in", &p("raw"), "--out", &p("grid"), "--jobs", "4"]);
    run(&[
        "label", "--in", &p("grid"), "--out", &p("labeled"),
        "--horizon", "3", "--seed", "5",
    ]);
    run(&[
        "train",
        "--train", &p("labeled/h03_train.safd"),
        "--dev", &p("labeled/h03_dev.safd"),
        "--out", &p("model"),
        "--seed", "1", "--epochs", "4", "--batch", "8", "--threads", "4",
    ]);
    run(&[
        "eval",
        "--checkpoint", &p("model"),
        "--data", &p("labeled/h03_train.safd"),
        "--out", &p("report"),
        "--boot", "300", "--seed", "2",
    ]);
    run(&[
        "explain",
        "--checkpoint", &p("model"),
        "--out", &p("explain"),
        "--mask", "--svg",
    ]);

    println!("\nartifacts under {}:", root.display());
    let mut stack = vec![root.clone()];
    let mut files = Vec::new();
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push(path.strip_prefix(&root).unwrap().display().to_string());
            }
        }
    }
    files.sort();
    for f in files.iter().filter(|f| !f.contains("waveform")) {
        println!("  {}", f);
    }
    println!("  (+ {} waveform.csv files)", files.iter().filter(|f| f.contains("waveform")).count());
}
