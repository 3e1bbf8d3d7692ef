//! Mini-batch training with seeded shuffling, dev-set model selection,
//! early stopping, plateau learning-rate halving, and binary checkpoints.

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::evaluation::{self, EvalError};
use crate::labeling::{DatasetSplit, Split};
use crate::model::{self, Ablation, HyperConfig, Mode, ModelError, ModelParams};
use crate::numerics::{Scalar, Tensor};
use crate::rng::{splitmix64, Rng};
use crate::signal_io::Segment;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd { momentum: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a dev-AUROC improvement.
    pub patience: usize,
    /// Halve the learning rate after this many stagnant epochs.
    pub lr_halve_patience: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Worker threads for per-sample gradient evaluation. Results are
    /// reduced in a fixed chunk order, so reruns with the same config are
    /// bit-identical.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            lr_halve_patience: 3,
            seed: 0,
            optimizer: Optimizer::default(),
            threads: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_auroc: f64,
    pub wall_s: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,dev_auroc,wall_s\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch, e.train_loss, e.dev_auroc, e.wall_s
            ));
        }
        out
    }
}

#[derive(Debug)]
pub enum TrainError {
    EmptySet(&'static str),
    UnlabeledSegment { index: usize },
    SplitViolation(String),
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        grad_norm: f64,
    },
    Model(ModelError),
    Metric(EvalError),
    Checkpoint(String),
    Io(std::io::Error),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::EmptySet(which) => write!(f, "{} set is empty", which),
            TrainError::UnlabeledSegment { index } => {
                write!(f, "segment {} has no label", index)
            }
            TrainError::SplitViolation(msg) => write!(f, "split violation: {}", msg),
            TrainError::NonFiniteLoss {
                epoch,
                batch,
                grad_norm,
            } => write!(
                f,
                "non-finite loss at epoch {} batch {} (grad norm {})",
                epoch, batch, grad_norm
            ),
            TrainError::Model(e) => write!(f, "{}", e),
            TrainError::Metric(e) => write!(f, "{}", e),
            TrainError::Checkpoint(msg) => write!(f, "corrupt checkpoint: {}", msg),
            TrainError::Io(e) => write!(f, "io error: {}", e),
        }
    }
}

impl std::error::Error for TrainError {}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e)
    }
}

impl From<EvalError> for TrainError {
    fn from(e: EvalError) -> Self {
        TrainError::Metric(e)
    }
}

impl From<std::io::Error> for TrainError {
    fn from(e: std::io::Error) -> Self {
        TrainError::Io(e)
    }
}

/// Mean binary cross-entropy over probabilities, clamped to
/// [1e-7, 1 − 1e-7] for numerical safety.
pub fn bce_loss(probs: &[f64], labels: &[f64]) -> f64 {
    assert_eq!(probs.len(), labels.len());
    assert!(!probs.is_empty());
    let mut acc = 0.0;
    for (&p, &y) in probs.iter().zip(labels.iter()) {
        let p = p.clamp(1e-7, 1.0 - 1e-7);
        acc -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    acc / probs.len() as f64
}

/// Gradients keyed by parameter name, in canonical parameter order.
pub type NamedGrads<S> = Vec<(String, Tensor<S>)>;

/// Loss and named gradients of the model on one sample. The heart of both
/// the optimizer step and the gradient checker.
pub fn model_loss_and_grads<S: Scalar>(
    params: &ModelParams<S>,
    x: &Tensor<S>,
    label: f64,
    mode: Mode,
    dropout_rng: Option<&mut Rng>,
) -> Result<(f64, NamedGrads<S>), ModelError> {
    let built = model::build_forward(params, x, mode, dropout_rng, false)?;
    let mut graph = built.graph;
    let loss = graph.bce_with_logits(built.logit, &[S::from_f64(label)]);
    let loss_value = graph.value(loss).data()[0].to_f64();
    let mut grads = graph.backward(loss);
    let out = built
        .param_nodes
        .iter()
        .map(|(name, node)| {
            let g = grads
                .take(*node)
                .unwrap_or_else(|| Tensor::zeros(graph.value(*node).shape()));
            (name.clone(), g)
        })
        .collect();
    Ok((loss_value, out))
}

fn segment_label(seg: &Segment, index: usize) -> Result<f64, TrainError> {
    seg.label
        .as_f64()
        .ok_or(TrainError::UnlabeledSegment { index })
}

/// Dropout stream for one (epoch, sample) pair; independent of batch
/// composition and thread scheduling.
fn dropout_rng_for(seed: u64, epoch: usize, sample: usize) -> Rng {
    let mut s = seed ^ 0xD80F_D80F_D80F_D80F;
    s = s.wrapping_add((epoch as u64) << 32).wrapping_add(sample as u64);
    Rng::seed_from(splitmix64(&mut s))
}

/// Chunked parallel map with deterministic output order.
pub(crate) fn parallel_chunks<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let threads = threads.max(1).min(items.len().max(1));
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk_len = items.len().div_ceil(threads);
    let mut out: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let mut slots: Vec<&mut [Option<R>]> = out.chunks_mut(chunk_len).collect();
    std::thread::scope(|scope| {
        for (chunk, slot) in items.chunks(chunk_len).zip(slots.iter_mut()) {
            let f = &f;
            scope.spawn(move || {
                for (item, cell) in chunk.iter().zip(slot.iter_mut()) {
                    *cell = Some(f(item));
                }
            });
        }
    });
    out.into_iter().map(|r| r.expect("chunk filled")).collect()
}

/// Eval-mode scores for a set of segments.
pub fn score_segments<S: Scalar>(
    params: &ModelParams<S>,
    segments: &[Segment],
    threads: usize,
) -> Result<Vec<f64>, ModelError> {
    let results = parallel_chunks(segments, threads, |seg| model::predict(params, &seg.data));
    results.into_iter().collect()
}

struct OptState<S> {
    m: Vec<Tensor<S>>,
    v: Vec<Tensor<S>>,
    step: usize,
}

fn apply_update<S: Scalar>(
    params: &mut ModelParams<S>,
    order: &[String],
    grads: &[Tensor<S>],
    state: &mut OptState<S>,
    cfg: &TrainConfig,
    lr: f64,
) {
    state.step += 1;
    match cfg.optimizer {
        Optimizer::Adam { beta1, beta2, eps } => {
            let b1 = S::from_f64(beta1);
            let b2 = S::from_f64(beta2);
            let one_m_b1 = S::from_f64(1.0 - beta1);
            let one_m_b2 = S::from_f64(1.0 - beta2);
            let corr1 = S::from_f64(1.0 - beta1.powi(state.step as i32));
            let corr2 = S::from_f64(1.0 - beta2.powi(state.step as i32));
            let lr_s = S::from_f64(lr);
            let eps_s = S::from_f64(eps);
            for ((name, g), (m, v)) in order
                .iter()
                .zip(grads.iter())
                .zip(state.m.iter_mut().zip(state.v.iter_mut()))
            {
                let tensor = params.tensor_mut(name).expect("known param");
                for i in 0..g.len() {
                    let gi = g.data()[i];
                    let mi = b1 * m.data()[i] + one_m_b1 * gi;
                    let vi = b2 * v.data()[i] + one_m_b2 * gi * gi;
                    m.data_mut()[i] = mi;
                    v.data_mut()[i] = vi;
                    let m_hat = mi / corr1;
                    let v_hat = vi / corr2;
                    tensor.data_mut()[i] -= lr_s * m_hat / (v_hat.sqrt() + eps_s);
                }
            }
        }
        Optimizer::Sgd { momentum } => {
            let mu = S::from_f64(momentum);
            let lr_s = S::from_f64(lr);
            for ((name, g), m) in order.iter().zip(grads.iter()).zip(state.m.iter_mut()) {
                let tensor = params.tensor_mut(name).expect("known param");
                for i in 0..g.len() {
                    let buf = mu * m.data()[i] + g.data()[i];
                    m.data_mut()[i] = buf;
                    tensor.data_mut()[i] -= lr_s * buf;
                }
            }
        }
    }
}

/// Train with seeded mini-batches, evaluating dev AUROC each epoch and
/// returning the parameters from the best epoch (ties go to the earliest).
pub fn train<S: Scalar>(
    train_set: &[Segment],
    dev_set: &[Segment],
    init: ModelParams<S>,
    cfg: &TrainConfig,
) -> Result<(ModelParams<S>, TrainLog), TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptySet("train"));
    }
    if dev_set.is_empty() {
        return Err(TrainError::EmptySet("dev"));
    }
    let train_labels: Vec<f64> = train_set
        .iter()
        .enumerate()
        .map(|(i, s)| segment_label(s, i))
        .collect::<Result<_, _>>()?;
    let dev_labels: Vec<f64> = dev_set
        .iter()
        .enumerate()
        .map(|(i, s)| segment_label(s, i))
        .collect::<Result<_, _>>()?;

    let mut params = init;
    let live = params.live_param_names();
    let mut state = OptState {
        m: live
            .iter()
            .map(|n| {
                let (_, t) = params
                    .named_tensors()
                    .into_iter()
                    .find(|(name, _)| name == n)
                    .expect("live param exists");
                Tensor::zeros(t.shape())
            })
            .collect(),
        v: Vec::new(),
        step: 0,
    };
    state.v = state.m.clone();

    let inputs: Vec<Tensor<S>> = train_set.iter().map(|s| s.data.cast::<S>()).collect();

    let mut log = TrainLog::default();
    let mut best: Option<(f64, usize, ModelParams<S>)> = None;
    let mut stagnant = 0usize;
    let mut plateau = 0usize;
    let mut lr = cfg.lr;

    for epoch in 0..cfg.max_epochs {
        let t0 = Instant::now();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        Rng::derive(cfg.seed, 0xE70C_u64 + epoch as u64).shuffle(&mut order);

        let mut loss_sum = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let jobs: Vec<(usize, f64)> = batch
                .iter()
                .map(|&i| (i, train_labels[i]))
                .collect();
            let results = parallel_chunks(&jobs, cfg.threads, |&(i, y)| {
                let mut drop_rng = dropout_rng_for(cfg.seed, epoch, i);
                model_loss_and_grads(&params, &inputs[i], y, Mode::Train, Some(&mut drop_rng))
            });

            let mut batch_loss = 0.0;
            let mut grad_sum: Vec<Tensor<S>> =
                state.m.iter().map(|t| Tensor::zeros(t.shape())).collect();
            for result in results {
                let (loss, grads) = result?;
                batch_loss += loss;
                for ((_, g), acc) in grads.iter().zip(grad_sum.iter_mut()) {
                    acc.add_scaled(g, S::ONE);
                }
            }
            let inv = S::from_f64(1.0 / batch.len() as f64);
            for g in grad_sum.iter_mut() {
                for v in g.data_mut() {
                    *v *= inv;
                }
            }
            batch_loss /= batch.len() as f64;
            loss_sum += batch_loss * batch.len() as f64;

            if !batch_loss.is_finite()
                || grad_sum.iter().any(|g| !g.all_finite())
            {
                let grad_norm = grad_sum.iter().map(Tensor::sq_norm).sum::<f64>().sqrt();
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    grad_norm,
                });
            }
            apply_update(&mut params, &live, &grad_sum, &mut state, cfg, lr);
        }
        let train_loss = loss_sum / train_set.len() as f64;

        let dev_scores = score_segments(&params, dev_set, cfg.threads)?;
        let dev_auroc = evaluation::roc_auc(&dev_scores, &dev_labels)?;

        log.epochs.push(EpochStats {
            epoch,
            train_loss,
            dev_auroc,
            wall_s: t0.elapsed().as_secs_f64(),
        });

        let improved = best.as_ref().is_none_or(|(b, _, _)| dev_auroc > *b);
        if improved {
            best = Some((dev_auroc, epoch, params.clone()));
            stagnant = 0;
            plateau = 0;
        } else {
            stagnant += 1;
            plateau += 1;
            if plateau >= cfg.lr_halve_patience {
                lr *= 0.5;
                plateau = 0;
            }
            if stagnant >= cfg.patience {
                break;
            }
        }
    }

    let (_, best_epoch, best_params) = best.expect("at least one epoch ran");
    log.best_epoch = best_epoch;
    Ok((best_params, log))
}

/// Split-tagged wrapper: refuses to train on anything tagged test.
pub fn train_on_splits<S: Scalar>(
    train_split: &DatasetSplit,
    dev_split: &DatasetSplit,
    init: ModelParams<S>,
    cfg: &TrainConfig,
) -> Result<(ModelParams<S>, TrainLog), TrainError> {
    for (split, role) in [(train_split.split, "train"), (dev_split.split, "dev")] {
        if split == Split::Test {
            return Err(TrainError::SplitViolation(format!(
                "{} input is tagged as the test split",
                role
            )));
        }
    }
    train(&train_split.segments, &dev_split.segments, init, cfg)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    tensors: Vec<TensorInfo>,
    dtype: String,
    hyper: HyperConfig,
    ablation: Ablation,
    rng_seed: u64,
    dev_metric: f64,
}

/// Extra context stored alongside checkpoint tensors.
#[derive(Clone, Debug)]
pub struct CheckpointMeta {
    pub rng_seed: u64,
    pub dev_metric: f64,
    pub dtype: String,
}

/// Write `checkpoint.json` (manifest) and `checkpoint.bin` (tensors
/// little-endian, concatenated in manifest order, in the training dtype).
/// Writes are atomic: temp file then rename.
pub fn save_checkpoint<S: Scalar>(
    params: &ModelParams<S>,
    dir: &Path,
    rng_seed: u64,
    dev_metric: f64,
) -> Result<(), TrainError> {
    fs::create_dir_all(dir)?;
    let named = params.named_tensors();
    let manifest = CheckpointManifest {
        tensors: named
            .iter()
            .map(|(name, t)| TensorInfo {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        dtype: S::DTYPE.to_string(),
        hyper: params.hyper.clone(),
        ablation: params.ablation,
        rng_seed,
        dev_metric,
    };
    let mut blob = Vec::new();
    for (_, t) in &named {
        for &v in t.data() {
            match S::DTYPE {
                "f32" => blob.extend_from_slice(&(v.to_f64() as f32).to_le_bytes()),
                _ => blob.extend_from_slice(&v.to_f64().to_le_bytes()),
            }
        }
    }
    let write_atomic = |name: &str, bytes: &[u8]| -> std::io::Result<()> {
        let tmp = dir.join(format!(".{}.tmp", name));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, dir.join(name))
    };
    write_atomic(
        "checkpoint.json",
        serde_json::to_string_pretty(&manifest)
            .expect("manifest serializes")
            .as_bytes(),
    )?;
    write_atomic("checkpoint.bin", &blob)?;
    Ok(())
}

/// Load a checkpoint directory, validating the manifest against the blob
/// and against the expected tensor shapes for its hyperparameters.
pub fn load_checkpoint<S: Scalar>(dir: &Path) -> Result<(ModelParams<S>, CheckpointMeta), TrainError> {
    let manifest_text = fs::read_to_string(dir.join("checkpoint.json"))?;
    let manifest: CheckpointManifest = serde_json::from_str(&manifest_text)
        .map_err(|e| TrainError::Checkpoint(format!("manifest: {}", e)))?;
    let blob = fs::read(dir.join("checkpoint.bin"))?;

    let elem = match manifest.dtype.as_str() {
        "f32" => 4,
        "f64" => 8,
        other => {
            return Err(TrainError::Checkpoint(format!(
                "unknown dtype {:?}",
                other
            )))
        }
    };
    let expected: usize = manifest
        .tensors
        .iter()
        .map(|t| t.shape.iter().product::<usize>())
        .sum();
    if blob.len() != expected * elem {
        return Err(TrainError::Checkpoint(format!(
            "blob length {} does not match manifest ({} values × {} bytes)",
            blob.len(),
            expected,
            elem
        )));
    }

    // Template with the right shapes for this hyper/ablation pair.
    let mut params = ModelParams::<S>::init(manifest.hyper.clone(), manifest.ablation, 0);
    let mut seen = std::collections::BTreeSet::new();
    let mut offset = 0usize;
    for info in &manifest.tensors {
        let n: usize = info.shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let start = (offset + i) * elem;
            let v = match manifest.dtype.as_str() {
                "f32" => f32::from_le_bytes(blob[start..start + 4].try_into().unwrap()) as f64,
                _ => f64::from_le_bytes(blob[start..start + 8].try_into().unwrap()),
            };
            data.push(S::from_f64(v));
        }
        offset += n;
        let target = params.tensor_mut(&info.name).ok_or_else(|| {
            TrainError::Checkpoint(format!("unknown tensor {:?}", info.name))
        })?;
        if target.shape() != info.shape.as_slice() {
            return Err(TrainError::Checkpoint(format!(
                "tensor {} has shape {:?}, hyperparameters require {:?}",
                info.name,
                info.shape,
                target.shape()
            )));
        }
        *target = Tensor::from_vec(&info.shape, data);
        seen.insert(info.name.clone());
    }
    let all: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    for name in all {
        if !seen.contains(&name) {
            return Err(TrainError::Checkpoint(format!("missing tensor {:?}", name)));
        }
    }
    if !params.all_finite() {
        return Err(TrainError::Checkpoint("non-finite values".to_string()));
    }
    Ok((
        params,
        CheckpointMeta {
            rng_seed: manifest.rng_seed,
            dev_metric: manifest.dev_metric,
            dtype: manifest.dtype,
        },
    ))
}
