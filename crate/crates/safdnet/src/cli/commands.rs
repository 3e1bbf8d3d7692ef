//! Subcommand implementations. Everything composes through files: case
//! directories, segment archives, checkpoint directories, CSV/JSON
//! reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::args::{parse, usage_text, FlagSpec, ParsedArgs};
use super::config::RunConfig;
use super::CliError;
use crate::evaluation::{self, EvalReport};
use crate::explain as explain_mod;
use crate::labeling::{self, Split};
use crate::model::{Ablation, ModelParams};
use crate::numerics::Scalar;
use crate::rng::splitmix64;
use crate::signal_io::{self, ChannelMode, Label, Segment};
use crate::synthgen::{self, PrecursorKind};
use crate::training::{self, parallel_chunks, TrainConfig};

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {}", path.display(), e)))
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Data(format!("{}: {}", path.display(), e)))
}

/// Sorted case subdirectories (those containing a manifest.json).
fn case_dirs(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut dirs = Vec::new();
    let entries =
        fs::read_dir(root).map_err(|e| CliError::Data(format!("{}: {}", root.display(), e)))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::Data(e.to_string()))?;
        let path = entry.path();
        if path.is_dir() && path.join("manifest.json").exists() {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::Data(format!(
            "no case directories under {}",
            root.display()
        )));
    }
    Ok(dirs)
}

fn per_case_seed(base: u64, index: usize) -> u64 {
    let mut s = base.wrapping_add(index as u64);
    splitmix64(&mut s)
}

fn parse_horizons(raw: Option<&str>, default: &[u16]) -> Result<Vec<u16>, CliError> {
    let Some(raw) = raw else {
        return Ok(default.to_vec());
    };
    let mut out = Vec::new();
    for part in raw.split(',') {
        let h: u16 = part
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("--horizon: bad value {:?}", part)))?;
        if ![3, 5, 10, 15].contains(&h) {
            return Err(CliError::Usage(format!(
                "--horizon must be one of 3,5,10,15 (got {})",
                h
            )));
        }
        out.push(h);
    }
    Ok(out)
}

fn parse_channels(raw: Option<&str>) -> Result<Option<ChannelMode>, CliError> {
    match raw {
        None => Ok(None),
        Some("abp") => Ok(Some(ChannelMode::AbpOnly)),
        Some("multi") => Ok(Some(ChannelMode::Multi)),
        Some(other) => Err(CliError::Usage(format!(
            "--channels must be abp or multi (got {:?})",
            other
        ))),
    }
}

// ─── synth ───────────────────────────────────────────────────────────

const SYNTH_FLAGS: &[FlagSpec] = &[
    FlagSpec { name: "help", takes_value: false, help: "show this help" },
    FlagSpec { name: "out", takes_value: true, help: "output directory (required)" },
    FlagSpec { name: "cases", takes_value: true, help: "number of cases to generate" },
    FlagSpec { name: "seed", takes_value: true, help: "master seed" },
    FlagSpec { name: "config", takes_value: true, help: "JSON config file" },
    FlagSpec { name: "jobs", takes_value: true, help: "parallel workers" },
    FlagSpec { name: "duration", takes_value: true, help: "case duration in seconds" },
    FlagSpec { name: "events", takes_value: true, help: "hypotension events per case" },
    FlagSpec { name: "precursor", takes_value: true, help: "pp_decay | hr_drift | spectral_tone" },
    FlagSpec { name: "lead", takes_value: true, help: "precursor lead before onset, seconds" },
    FlagSpec { name: "noise-abp", takes_value: true, help: "ABP noise sigma, mmHg" },
    FlagSpec { name: "rate", takes_value: true, help: "native sample rate, Hz" },
];

pub fn synth(argv: &[String]) -> Result<(), CliError> {
    let parsed = parse(argv, SYNTH_FLAGS)?;
    if parsed.has("help") {
        print!("{}", usage_text("synth", "generate synthetic case directories", SYNTH_FLAGS));
        return Ok(());
    }
    let mut cfg = RunConfig::load(parsed.get("config"))?;
    if let Some(v) = parsed.get_parsed::<usize>("cases")? {
        cfg.cases = v;
    }
    if let Some(v) = parsed.get_parsed::<u64>("seed")? {
        cfg.synth.seed = v;
    }
    if let Some(v) = parsed.get_parsed::<usize>("jobs")? {
        cfg.jobs = v;
    }
    if let Some(v) = parsed.get_parsed::<f64>("duration")? {
        cfg.synth.duration_s = v;
    }
    if let Some(v) = parsed.get_parsed::<usize>("events")? {
        cfg.synth.n_events = v;
    }
    if let Some(v) = parsed.get_parsed::<f64>("lead")? {
        cfg.synth.precursor_lead_s = v;
    }
    if let Some(v) = parsed.get_parsed::<f64>("noise-abp")? {
        cfg.synth.noise_sigma.abp = v;
    }
    if let Some(v) = parsed.get_parsed::<f64>("rate")? {
        cfg.synth.sample_rate_hz = v;
    }
    if let Some(kind) = parsed.get("precursor") {
        cfg.synth.precursor_kind = match kind {
            "pp_decay" => PrecursorKind::PpDecay,
            "hr_drift" => PrecursorKind::HrDrift,
            "spectral_tone" => PrecursorKind::SpectralTone,
            other => {
                return Err(CliError::Usage(format!(
                    "--precursor: unknown kind {:?}",
                    other
                )))
            }
        };
    }
    cfg.validate()?;
    let out = PathBuf::from(parsed.require("out")?);
    ensure_dir(&out)?;
    cfg.write_resolved(&out)?;

    let indices: Vec<usize> = (0..cfg.cases).collect();
    let results = parallel_chunks(&indices, cfg.jobs, |&i| {
        let mut params = cfg.synth.clone();
        params.seed = per_case_seed(cfg.synth.seed, i);
        let case_id = format!("case_{:04}", i);
        let case = synthgen::gen_case(&params, &case_id)?;
        signal_io::write_case(&out.join(&case_id), &case)
            .map_err(|e| synthgen::SynthError::InvalidParams(e.to_string()))?;
        Ok::<usize, synthgen::SynthError>(case.event_truth_s.map_or(0, |t| t.len()))
    });
    let mut total_events = 0;
    for r in results {
        total_events += r?;
    }
    println!(
        "synth: wrote {} cases ({} events) to {}",
        cfg.cases,
        total_events,
        out.display()
    );
    Ok(())
}

// ─── ingest ──────────────────────────────────────────────────────────

const INGEST_FLAGS: &[FlagSpec] = &[
    FlagSpec { name: "help", takes_value: false, help: "show this help" },
    FlagSpec { name: "in", takes_value: true, help: "directory of raw case dirs (required)" },
    FlagSpec { name: "out", takes_value: true, help: "output directory (required)" },
    FlagSpec { name: "jobs", takes_value: true, help: "parallel workers" },
    FlagSpec { name: "config", takes_value: true, help: "JSON config file" },
];

pub fn ingest(argv: &[String]) -> Result<(), CliError> {
    let parsed = parse(argv, INGEST_FLAGS)?;
    if parsed.has("help") {
        print!("{}", usage_text("ingest", "resample raw cases onto the 100 Hz grid", INGEST_FLAGS));
        return Ok(());
    }
    let mut cfg = RunConfig::load(parsed.get("config"))?;
    if let Some(v) = parsed.get_parsed::<usize>("jobs")? {
        cfg.jobs = v;
    }
    let in_dir = PathBuf::from(parsed.require("in")?);
    let out = PathBuf::from(parsed.require("out")?);
    ensure_dir(&out)?;
    cfg.write_resolved(&out)?;

    let dirs = case_dirs(&in_dir)?;
    let results = parallel_chunks(&dirs, cfg.jobs, |dir| {
        let case = signal_io::load_case(dir)?;
        let resampled = signal_io::resample_case(&case)?;
        signal_io::write_case(&out.join(&resampled.case_id), &resampled)?;
        Ok::<(), signal_io::SignalError>(())
    });
    for r in results {
        r?;
    }
    println!("ingest: resampled {} cases into {}", dirs.len(), out.display());
    Ok(())
}

// ─── label ───────────────────────────────────────────────────────────

const LABEL_FLAGS: &[FlagSpec] = &[
    FlagSpec { name: "help", takes_value: false, help: "show this help" },
    FlagSpec { name: "in", takes_value: true, help: "directory of 100 Hz case dirs (required)" },
    FlagSpec { name: "out", takes_value: true, help: "output directory (required)" },
    FlagSpec { name: "seed", takes_value: true, help: "labeling/splitting seed" },
    FlagSpec { name: "horizon", takes_value: true, help: "comma list from {3,5,10,15}" },
    FlagSpec { name: "channels", takes_value: true, help: "abp | multi" },
    FlagSpec { name: "window", takes_value: true, help: "input window length, seconds" },
    FlagSpec { name: "jobs", takes_value: true, help: "parallel workers" },
    FlagSpec { name: "config", takes_value: true, help: "JSON config file" },
];

/// Sidecar describing which archive belongs to which split; the train
/// subcommand refuses inputs tagged `test`.
#[derive(Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub horizons_min: Vec<u16>,
    pub window_s: f64,
    pub case_splits: BTreeMap<String, Split>,
    pub files: BTreeMap<String, Split>,
    pub counts: BTreeMap<String, (usize, usize)>,
}

pub fn label(argv: &[String]) -> Result<(), CliError> {
    let parsed = parse(argv, LABEL_FLAGS)?;
    if parsed.has("help") {
        print!("{}", usage_text("label", "build horizon-aligned labeled segment archives", LABEL_FLAGS));
        return Ok(());
    }
    let mut cfg = RunConfig::load(parsed.get("config"))?;
    if let Some(v) = parsed.get_parsed::<u64>("seed")? {
        cfg.label.seed = v;
    }
    if let Some(v) = parsed.get_parsed::<usize>("jobs")? {
        cfg.jobs = v;
    }
    if let Some(v) = parsed.get_parsed::<f64>("window")? {
        cfg.label.window_s = v;
    }
    cfg.label.horizons_min = parse_horizons(parsed.get("horizon"), &cfg.label.horizons_min)?;
    if let Some(mode) = parse_channels(parsed.get("channels"))? {
        cfg.label.channel_mode = mode;
    }
    cfg.validate()?;
    let in_dir = PathBuf::from(parsed.require("in")?);
    let out = PathBuf::from(parsed.require("out")?);
    ensure_dir(&out)?;
    cfg.write_resolved(&out)?;

    let dirs = case_dirs(&in_dir)?;
    let label_cfg = cfg.label.clone();
    let per_case = parallel_chunks(&dirs, cfg.jobs, |dir| {
        let case = signal_io::load_case(dir)?;
        let case = if case.is_on_grid() {
            case
        } else {
            signal_io::resample_case(&case)?
        };
        let datasets = labeling::build_dataset(&case, &label_cfg)
            .map_err(|e| signal_io::SignalError::Format(e.to_string()))?;
        Ok::<(String, BTreeMap<u16, Vec<Segment>>), signal_io::SignalError>((case.case_id, datasets))
    });

    let mut by_case = Vec::new();
    for r in per_case {
        by_case.push(r?);
    }
    let ids: Vec<String> = by_case.iter().map(|(id, _)| id.clone()).collect();
    let splits = labeling::split_cases(
        &ids,
        (cfg.split.train, cfg.split.dev, cfg.split.test),
        cfg.label.seed,
    );

    let mut files = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for &h in &cfg.label.horizons_min {
        for split in [Split::Train, Split::Dev, Split::Test] {
            let mut segments = Vec::new();
            for (case_id, datasets) in &by_case {
                if splits[case_id] != split {
                    continue;
                }
                if let Some(segs) = datasets.get(&h) {
                    segments.extend(segs.iter().cloned());
                }
            }
            let filename = format!("h{:02}_{}.safd", h, split);
            signal_io::write_segments(&out.join(&filename), &segments)?;
            let pos = segments
                .iter()
                .filter(|s| s.label == Label::Hypotension)
                .count();
            counts.insert(filename.clone(), (pos, segments.len() - pos));
            files.insert(filename, split);
        }
    }
    let manifest = DatasetManifest {
        seed: cfg.label.seed,
        horizons_min: cfg.label.horizons_min.clone(),
        window_s: cfg.label.window_s,
        case_splits: splits,
        files,
        counts: counts.clone(),
    };
    write_text(
        &out.join("dataset.json"),
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    for (file, (pos, neg)) in &counts {
        println!("label: {}  positives {}  negatives {}", file, pos, neg);
    }
    Ok(())
}

// ─── train ───────────────────────────────────────────────────────────

const TRAIN_FLAGS: &[FlagSpec] = &[
    FlagSpec { name: "help", takes_value: false, help: "show this help" },
    FlagSpec { name: "train", takes_value: true, help: "training segment archive (required)" },
    FlagSpec { name: "dev", takes_value: true, help: "dev segment archive (required)" },
    FlagSpec { name: "out", takes_value: true, help: "output directory (required)" },
    FlagSpec { name: "seed", takes_value: true, help: "training seed" },
    FlagSpec { name: "ablation", takes_value: true, help: "full | no_safb | no_cross_attn | single_path" },
    FlagSpec { name: "precision", takes_value: true, help: "f32 | f64" },
    FlagSpec { name: "epochs", takes_value: true, help: "maximum epochs" },
    FlagSpec { name: "lr", takes_value: true, help: "learning rate" },
    FlagSpec { name: "batch", takes_value: true, help: "batch size" },
    FlagSpec { name: "patience", takes_value: true, help: "early-stop patience" },
    FlagSpec { name: "threads", takes_value: true, help: "gradient worker threads" },
    FlagSpec { name: "config", takes_value: true, help: "JSON config file" },
];

/// Refuse any input whose dataset.json sidecar tags it as the test split.
fn guard_not_test(path: &Path) -> Result<(), CliError> {
    let Some(parent) = path.parent() else {
        return Ok(());
    };
    let sidecar = parent.join("dataset.json");
    if !sidecar.exists() {
        return Ok(());
    }
    let text = fs::read_to_string(&sidecar)
        .map_err(|e| CliError::Data(format!("{}: {}", sidecar.display(), e)))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {}", sidecar.display(), e)))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_default();
    if manifest.files.get(&name) == Some(&Split::Test) {
        return Err(CliError::Data(format!(
            "split violation: {} is tagged as the test split",
            path.display()
        )));
    }
    Ok(())
}

fn read_archive(path: &Path) -> Result<Vec<Segment>, CliError> {
    let segs = signal_io::read_segments(path)?;
    if segs.is_empty() {
        return Err(CliError::Data(format!(
            "{} contains no segments",
            path.display()
        )));
    }
    Ok(segs)
}

/// Derive the input-shape parts of the hyperparameters from an archive.
fn hyper_from_segments(cfg: &mut RunConfig, segs: &[Segment]) {
    cfg.hyper.channels = segs[0].data.rows();
    cfg.hyper.window_len = segs[0].data.cols();
    cfg.hyper.horizon_min = segs[0].horizon_min;
}

fn run_train<S: Scalar>(
    train_segs: &[Segment],
    dev_segs: &[Segment],
    cfg: &RunConfig,
    ablation: Ablation,
    out: &Path,
) -> Result<(f64, usize), CliError> {
    let init = ModelParams::<S>::init(cfg.hyper.clone(), ablation, cfg.train.seed);
    let (best, log) = training::train(train_segs, dev_segs, init, &cfg.train)?;
    let best_auroc = log.epochs[log.best_epoch].dev_auroc;
    training::save_checkpoint(&best, out, cfg.train.seed, best_auroc)?;
    write_text(&out.join("train_log.csv"), &log.to_csv())?;
    Ok((best_auroc, log.epochs.len()))
}

pub fn train(argv: &[String]) -> Result<(), CliError> {
    let parsed = parse(argv, TRAIN_FLAGS)?;
    if parsed.has("help") {
        print!("{}", usage_text("train", "train a model on labeled archives", TRAIN_FLAGS));
        return Ok(());
    }
    let mut cfg = RunConfig::load(parsed.get("config"))?;
    apply_train_flags(&mut cfg, &parsed)?;
    let ablation = parse_ablation(&parsed)?.unwrap_or(Ablation::Full);
    cfg.validate()?;

    let train_path = PathBuf::from(parsed.require("train")?);
    let dev_path = PathBuf::from(parsed.require("dev")?);
    guard_not_test(&train_path)?;
    guard_not_test(&dev_path)?;
    let train_segs = read_archive(&train_path)?;
    let dev_segs = read_archive(&dev_path)?;
    hyper_from_segments(&mut cfg, &train_segs);

    let out = PathBuf::from(parsed.require("out")?);
    ensure_dir(&out)?;
    cfg.write_resolved(&out)?;

    let (auroc, epochs) = match cfg.precision.as_str() {
        "f64" => run_train::<f64>(&train_segs, &dev_segs, &cfg, ablation, &out)?,
        _ => run_train::<f32>(&train_segs, &dev_segs, &cfg, ablation, &out)?,
    };
    println!(
        "train: {} ablation={} dev_auroc={:.4} after {} epochs -> {}",
        cfg.precision,
        ablation,
        auroc,
        epochs,
        out.display()
    );
    Ok(())
}

fn apply_train_flags(cfg: &mut RunConfig, parsed: &ParsedArgs) -> Result<(), CliError> {
    if let Some(v) = parsed.get_parsed::<u64>("seed")? {
        cfg.train.seed = v;
    }
    if let Some(v) = parsed.get_parsed::<usize>("epochs")? {
        cfg.train.max_epochs = v;
    }
    if let Some(v) = parsed.get_parsed::<f64>("lr")? {
        cfg.train.lr = v;
    }
    if let Some(v) = parsed.get_parsed::<usize>("batch")? {
        cfg.train.batch_size = v;
    }
    if let Some(v) = parsed.get_parsed::<usize>("patience")? {
        cfg.train.patience = v;
    }
    if let Some(v) = parsed.get_parsed::<usize>("threads")? {
        cfg.train.threads = v;
    }
    if let Some(v) = parsed.get("precision") {
        cfg.precision = v.to_string();
    }
    Ok(())
}

fn parse_ablation(parsed: &ParsedArgs) -> Result<Option<Ablation>, CliError> {
    match parsed.get("ablation") {
        None => Ok(None),
        Some(raw) => raw.parse::<Ablation>().map(Some).map_err(CliError::Usage),
    }
}

// ─── eval ────────────────────────────────────────────────────────────

const EVAL_FLAGS: &[FlagSpec] = &[
    FlagSpec { name: "help", takes_value: false, help: "show this help" },
    FlagSpec { name: "checkpoint", takes_value: true, help: "checkpoint directory (required)" },
    FlagSpec { name: "data", takes_value: true, help: "labeled segment archive (required)" },
    FlagSpec { name: "out", takes_value: true, help: "output directory (required)" },
    FlagSpec { name: "seed", takes_value: true, help: "bootstrap seed" },
    FlagSpec { name: "boot", takes_value: true, help: "bootstrap resamples" },
    FlagSpec { name: "bins", takes_value: true, help: "calibration bins" },
    FlagSpec { name: "threshold", takes_value: true, help: "decision threshold" },
    FlagSpec { name: "platt-dev", takes_value: true, help: "dev archive to fit Platt scaling on" },
    FlagSpec { name: "threads", takes_value: true, help: "scoring worker threads" },
    FlagSpec { name: "config", takes_value: true, help: "JSON config file" },
];

#[derive(Deserialize)]
struct DtypePeek {
    dtype: String,
}

fn checkpoint_dtype(dir: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(dir.join("checkpoint.json"))
        .map_err(|e| CliError::Data(format!("{}: {}", dir.display(), e)))?;
    let peek: DtypePeek = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("checkpoint manifest: {}", e)))?;
    Ok(peek.dtype)
}

fn score_with_checkpoint(
    dir: &Path,
    segments: &[Segment],
    threads: usize,
) -> Result<Vec<f64>, CliError> {
    match checkpoint_dtype(dir)?.as_str() {
        "f64" => {
            let (params, _) = training::load_checkpoint::<f64>(dir)?;
            Ok(training::score_segments(&params, segments, threads)?)
        }
        _ => {
            let (params, _) = training::load_checkpoint::<f32>(dir)?;
            Ok(training::score_segments(&params, segments, threads)?)
        }
    }
}

fn labels_of(segments: &[Segment]) -> Result<Vec<f64>, CliError> {
    segments
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.label
                .as_f64()
                .ok_or_else(|| CliError::Data(format!("segment {} is unlabeled", i)))
        })
        .collect()
}

fn roc_csv(report: &EvalReport) -> String {
    let mut out = String::from("fpr,tpr\n");
    for (fpr, tpr) in &report.roc_points {
        out.push_str(&format!("{},{}\n", fpr, tpr));
    }
    out
}

fn pr_csv(report: &EvalReport) -> String {
    let mut out = String::from("recall,precision\n");
    for (recall, precision) in &report.pr_points {
        out.push_str(&format!("{},{}\n", recall, precision));
    }
    out
}

fn calibration_csv(report: &EvalReport) -> String {
    let mut out = String::from("bin_lo,bin_hi,mean_pred,frac_pos,count\n");
    for b in &report.calibration {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            b.bin_lo, b.bin_hi, b.mean_pred, b.frac_pos, b.count
        ));
    }
    out
}

pub fn eval(argv: &[String]) -> Result<(), CliError> {
    let parsed = parse(argv, EVAL_FLAGS)?;
    if parsed.has("help") {
        print!("{}", usage_text("eval", "score a labeled archive and write a metrics report", EVAL_FLAGS));
        return Ok(());
    }
    let mut cfg = RunConfig::load(parsed.get("config"))?;
    if let Some(v) = parsed.get_parsed::<usize>("boot")? {
        cfg.eval.n_boot = v;
    }
    if let Some(v) = parsed.get_parsed::<usize>("bins")? {
        cfg.eval.bins = v;
    }
    if let Some(v) = parsed.get_parsed::<f64>("threshold")? {
        cfg.eval.threshold = v;
    }
    if let Some(v) = parsed.get_parsed::<usize>("threads")? {
        cfg.train.threads = v;
    }
    let seed = parsed.get_parsed::<u64>("seed")?.unwrap_or(cfg.train.seed);

    let ckpt_dir = PathBuf::from(parsed.require("checkpoint")?);
    let data_path = PathBuf::from(parsed.require("data")?);
    let segments = read_archive(&data_path)?;
    let labels = labels_of(&segments)?;
    let mut scores = score_with_checkpoint(&ckpt_dir, &segments, cfg.train.threads)?;

    let mut platt = None;
    if let Some(dev_path) = parsed.get("platt-dev") {
        let dev_segments = read_archive(Path::new(dev_path))?;
        let dev_labels = labels_of(&dev_segments)?;
        let dev_scores = score_with_checkpoint(&ckpt_dir, &dev_segments, cfg.train.threads)?;
        let fit = evaluation::platt_recalibrate(&dev_scores, &dev_labels)?;
        scores = fit.apply_all(&scores);
        platt = Some(fit);
    }

    let horizon = segments[0].horizon_min;
    let mut report = evaluation::evaluate(
        &scores,
        &labels,
        horizon,
        cfg.eval.threshold,
        cfg.eval.n_boot,
        cfg.eval.bins,
        seed,
    )?;
    report.platt = platt;

    let out = PathBuf::from(parsed.require("out")?);
    ensure_dir(&out)?;
    cfg.write_resolved(&out)?;
    write_text(
        &out.join("report.json"),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    write_text(&out.join("roc.csv"), &roc_csv(&report))?;
    write_text(&out.join("pr.csv"), &pr_csv(&report))?;
    write_text(&out.join("calibration.csv"), &calibration_csv(&report))?;
    println!(
        "eval: n={} auroc={:.4} ({:.4}-{:.4}) auprc={:.4} f1={:.4} -> {}",
        report.n,
        report.auroc.point,
        report.auroc.ci_lo,
        report.auroc.ci_hi,
        report.auprc.point,
        report.f1.point,
        out.display()
    );
    Ok(())
}

// ─── ablate ──────────────────────────────────────────────────────────

const ABLATE_FLAGS: &[FlagSpec] = &[
    FlagSpec { name: "help", takes_value: false, help: "show this help" },
    FlagSpec { name: "train", takes_value: true, help: "training segment archive (required)" },
    FlagSpec { name: "dev", takes_value: true, help: "dev segment archive (required)" },
    FlagSpec { name: "test", takes_value: true, help: "held-out segment archive (required)" },
    FlagSpec { name: "out", takes_value: true, help: "output directory (required)" },
    FlagSpec { name: "seed", takes_value: true, help: "base seed" },
    FlagSpec { name: "seeds", takes_value: true, help: "number of seeds to average over" },
    FlagSpec { name: "epochs", takes_value: true, help: "maximum epochs per run" },
    FlagSpec { name: "batch", takes_value: true, help: "batch size" },
    FlagSpec { name: "patience", takes_value: true, help: "early-stop patience" },
    FlagSpec { name: "threads", takes_value: true, help: "gradient worker threads" },
    FlagSpec { name: "precision", takes_value: true, help: "f32 | f64" },
    FlagSpec { name: "threshold", takes_value: true, help: "decision threshold" },
    FlagSpec { name: "config", takes_value: true, help: "JSON config file" },
];

pub struct AblationRow {
    pub ablation: Ablation,
    pub seed: u64,
    pub auroc: f64,
    pub accuracy: f64,
    pub f1: f64,
}

fn run_ablation_variant<S: Scalar>(
    train_segs: &[Segment],
    dev_segs: &[Segment],
    test_segs: &[Segment],
    test_labels: &[f64],
    cfg: &RunConfig,
    ablation: Ablation,
    seed: u64,
) -> Result<AblationRow, CliError> {
    let mut train_cfg: TrainConfig = cfg.train.clone();
    train_cfg.seed = seed;
    let init = ModelParams::<S>::init(cfg.hyper.clone(), ablation, seed);
    let (best, _) = training::train(train_segs, dev_segs, init, &train_cfg)?;
    let scores = training::score_segments(&best, test_segs, cfg.train.threads)?;
    let auroc = evaluation::roc_auc(&scores, test_labels)?;
    let m = evaluation::classify_metrics(&scores, test_labels, cfg.eval.threshold);
    Ok(AblationRow {
        ablation,
        seed,
        auroc,
        accuracy: m.accuracy,
        f1: m.f1,
    })
}

pub fn ablate(argv: &[String]) -> Result<(), CliError> {
    let parsed = parse(argv, ABLATE_FLAGS)?;
    if parsed.has("help") {
        print!("{}", usage_text("ablate", "train all ablation variants and tabulate them", ABLATE_FLAGS));
        return Ok(());
    }
    let mut cfg = RunConfig::load(parsed.get("config"))?;
    apply_train_flags(&mut cfg, &parsed)?;
    if let Some(v) = parsed.get_parsed::<f64>("threshold")? {
        cfg.eval.threshold = v;
    }
    let n_seeds = parsed.get_parsed::<u64>("seeds")?.unwrap_or(1).max(1);
    cfg.validate()?;

    let train_path = PathBuf::from(parsed.require("train")?);
    let dev_path = PathBuf::from(parsed.require("dev")?);
    let test_path = PathBuf::from(parsed.require("test")?);
    guard_not_test(&train_path)?;
    guard_not_test(&dev_path)?;
    let train_segs = read_archive(&train_path)?;
    let dev_segs = read_archive(&dev_path)?;
    let test_segs = read_archive(&test_path)?;
    let test_labels = labels_of(&test_segs)?;
    hyper_from_segments(&mut cfg, &train_segs);

    let out = PathBuf::from(parsed.require("out")?);
    ensure_dir(&out)?;
    cfg.write_resolved(&out)?;

    let mut rows = Vec::new();
    for seed_idx in 0..n_seeds {
        let seed = cfg.train.seed.wrapping_add(seed_idx);
        for ablation in Ablation::ALL {
            let row = match cfg.precision.as_str() {
                "f64" => run_ablation_variant::<f64>(
                    &train_segs, &dev_segs, &test_segs, &test_labels, &cfg, ablation, seed,
                )?,
                _ => run_ablation_variant::<f32>(
                    &train_segs, &dev_segs, &test_segs, &test_labels, &cfg, ablation, seed,
                )?,
            };
            println!(
                "ablate: seed={} model={} auroc={:.4} accuracy={:.4} f1={:.4}",
                row.seed, row.ablation, row.auroc, row.accuracy, row.f1
            );
            rows.push(row);
        }
    }

    let mut runs_csv = String::from("model,horizon_min,seed,auroc,accuracy,f1\n");
    for r in &rows {
        runs_csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.ablation, cfg.hyper.horizon_min, r.seed, r.auroc, r.accuracy, r.f1
        ));
    }
    write_text(&out.join("ablation_runs.csv"), &runs_csv)?;

    let mut table_csv = String::from("model,horizon_min,auroc,accuracy,f1\n");
    for ablation in Ablation::ALL {
        let subset: Vec<&AblationRow> = rows.iter().filter(|r| r.ablation == ablation).collect();
        let k = subset.len() as f64;
        let auroc = subset.iter().map(|r| r.auroc).sum::<f64>() / k;
        let accuracy = subset.iter().map(|r| r.accuracy).sum::<f64>() / k;
        let f1 = subset.iter().map(|r| r.f1).sum::<f64>() / k;
        table_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            ablation, cfg.hyper.horizon_min, auroc, accuracy, f1
        ));
    }
    write_text(&out.join("ablation.csv"), &table_csv)?;
    println!("ablate: wrote {}", out.join("ablation.csv").display());
    Ok(())
}

// ─── explain ─────────────────────────────────────────────────────────

const EXPLAIN_FLAGS: &[FlagSpec] = &[
    FlagSpec { name: "help", takes_value: false, help: "show this help" },
    FlagSpec { name: "checkpoint", takes_value: true, help: "checkpoint directory (required)" },
    FlagSpec { name: "out", takes_value: true, help: "output directory (required)" },
    FlagSpec { name: "mask", takes_value: false, help: "export the frequency-importance mask" },
    FlagSpec { name: "saliency", takes_value: true, help: "segment index for a sensitivity map" },
    FlagSpec { name: "data", takes_value: true, help: "segment archive for --saliency" },
    FlagSpec { name: "svg", takes_value: false, help: "also render SVG heatmaps" },
    FlagSpec { name: "config", takes_value: true, help: "JSON config file" },
];

pub fn explain(argv: &[String]) -> Result<(), CliError> {
    let parsed = parse(argv, EXPLAIN_FLAGS)?;
    if parsed.has("help") {
        print!("{}", usage_text("explain", "export the frequency mask and saliency maps", EXPLAIN_FLAGS));
        return Ok(());
    }
    let cfg = RunConfig::load(parsed.get("config"))?;
    let wants_mask = parsed.has("mask");
    let saliency_idx = parsed.get_parsed::<usize>("saliency")?;
    if !wants_mask && saliency_idx.is_none() {
        return Err(CliError::Usage(
            "nothing to do: pass --mask and/or --saliency <idx>".to_string(),
        ));
    }
    let ckpt_dir = PathBuf::from(parsed.require("checkpoint")?);
    // Loading as f64 is exact for both stored dtypes.
    let (params, _) = training::load_checkpoint::<f64>(&ckpt_dir)?;

    let out = PathBuf::from(parsed.require("out")?);
    ensure_dir(&out)?;
    cfg.write_resolved(&out)?;

    if wants_mask {
        let export = explain_mod::export_filter_mask(&params)?;
        write_text(&out.join("mask.csv"), &explain_mod::mask_csv(&export))?;
        if parsed.has("svg") {
            let (c, f) = export.mask_shape;
            let matrix = crate::numerics::Tensor::from_vec(&[c, f], export.mask.clone());
            write_text(
                &out.join("mask.svg"),
                &explain_mod::heatmap_svg(
                    &matrix,
                    &export.channel_names,
                    "frequency-importance mask",
                ),
            )?;
        }
        println!("explain: wrote {}", out.join("mask.csv").display());
    }

    if let Some(idx) = saliency_idx {
        let data_path = parsed.require("data")?;
        let segments = read_archive(Path::new(data_path))?;
        let segment = segments.get(idx).ok_or_else(|| {
            CliError::Data(format!(
                "--saliency {}: archive has only {} segments",
                idx,
                segments.len()
            ))
        })?;
        let map = explain_mod::sensitivity_map(&params, segment)?;
        let names: Vec<&str> = match segment.data.rows() {
            1 => vec!["ABP"],
            _ => vec!["ABP", "ECG", "PPG", "CO2"],
        };
        write_text(
            &out.join("saliency.csv"),
            &explain_mod::saliency_csv(&map, &names),
        )?;
        if parsed.has("svg") {
            write_text(
                &out.join("saliency.svg"),
                &explain_mod::heatmap_svg(
                    &map.saliency,
                    &names.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                    &format!("saliency (p = {:.3})", map.predicted_p),
                ),
            )?;
        }
        println!(
            "explain: wrote {} (p = {:.4})",
            out.join("saliency.csv").display(),
            map.predicted_p
        );
    }
    Ok(())
}
