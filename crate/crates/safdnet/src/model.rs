//! The network: a trainable frequency-importance mask applied between a
//! real FFT/IFFT pair, a strided 1-D CNN path and a pooled LSTM path over
//! the filtered signal, bidirectional cross-attention between the two
//! feature sequences, and a sigmoid head over the concatenated flattened
//! attention outputs. Ablation variants swap individual stages out.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::numerics::{fft, Graph, NodeId, Scalar, Tensor};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub out_channels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperConfig {
    /// Input channels C (4 multi-channel, 1 ABP-only).
    pub channels: usize,
    /// Input length T in samples at 100 Hz.
    pub window_len: usize,
    pub conv: Vec<ConvSpec>,
    pub lstm_hidden: usize,
    /// Average-pool factor applied to the time axis before the LSTM.
    pub lstm_pool: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub dropout_p: f64,
    pub horizon_min: u16,
    /// Standardize each channel of each input window to zero mean, unit
    /// variance before the network sees it.
    pub standardize: bool,
}

impl Default for HyperConfig {
    fn default() -> Self {
        HyperConfig {
            channels: 4,
            window_len: 3000,
            conv: vec![
                ConvSpec { kernel: 5, stride: 2, out_channels: 32 },
                ConvSpec { kernel: 5, stride: 2, out_channels: 64 },
                ConvSpec { kernel: 5, stride: 2, out_channels: 64 },
            ],
            lstm_hidden: 64,
            lstm_pool: 10,
            d_k: 64,
            d_v: 64,
            dropout_p: 0.3,
            horizon_min: 5,
            standardize: true,
        }
    }
}

impl HyperConfig {
    /// Sequence length after the conv stack (ceil division per stride).
    pub fn t_cnn(&self) -> usize {
        self.conv
            .iter()
            .fold(self.window_len, |t, spec| t.div_ceil(spec.stride))
    }

    pub fn d_cnn(&self) -> usize {
        self.conv.last().map_or(self.channels, |s| s.out_channels)
    }

    pub fn t_lstm(&self) -> usize {
        self.window_len / self.lstm_pool
    }

    pub fn n_bins(&self) -> usize {
        fft::n_bins(self.window_len)
    }

    pub fn fused_dim(&self, ablation: Ablation) -> usize {
        match ablation {
            Ablation::Full => (self.t_cnn() + self.t_lstm()) * self.d_v,
            Ablation::NoCrossAttn => {
                self.t_cnn() * self.d_cnn() + self.t_lstm() * self.lstm_hidden
            }
            Ablation::SinglePath => self.t_cnn() * self.d_cnn(),
            Ablation::NoSafb => (self.t_cnn() + self.t_lstm()) * self.d_v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    NoSafb,
    NoCrossAttn,
    SinglePath,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Full,
        Ablation::NoSafb,
        Ablation::NoCrossAttn,
        Ablation::SinglePath,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoSafb => "no_safb",
            Ablation::NoCrossAttn => "no_cross_attn",
            Ablation::SinglePath => "single_path",
        }
    }

    pub fn uses_safb(self) -> bool {
        self != Ablation::NoSafb
    }

    pub fn uses_lstm(self) -> bool {
        self != Ablation::SinglePath
    }

    pub fn uses_attention(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoSafb)
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Ablation::Full),
            "no_safb" => Ok(Ablation::NoSafb),
            "no_cross_attn" => Ok(Ablation::NoCrossAttn),
            "single_path" => Ok(Ablation::SinglePath),
            other => Err(format!(
                "unknown ablation {:?} (expected full | no_safb | no_cross_attn | single_path)",
                other
            )),
        }
    }
}

#[derive(Debug)]
pub enum ModelError {
    Shape(String),
    MissingDropoutRng,
    NoMask,
    Unsupported(String),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::Shape(msg) => write!(f, "shape error: {}", msg),
            ModelError::MissingDropoutRng => {
                write!(f, "train-mode forward with dropout needs an rng")
            }
            ModelError::NoMask => write!(f, "no_safb checkpoints carry no frequency mask"),
            ModelError::Unsupported(msg) => write!(f, "unsupported: {}", msg),
        }
    }
}

impl std::error::Error for ModelError {}

/// Projection triple for one cross-attention direction.
#[derive(Clone, Debug)]
pub struct Projection<S> {
    pub wq: Tensor<S>,
    pub wk: Tensor<S>,
    pub wv: Tensor<S>,
}

/// All trainable tensors plus the hyperparameters they were sized for.
#[derive(Clone, Debug)]
pub struct ModelParams<S> {
    pub hyper: HyperConfig,
    pub ablation: Ablation,
    /// Frequency weights (C, F); sigmoid of these is the importance mask.
    pub filter_w: Tensor<S>,
    pub conv_w: Vec<Tensor<S>>,
    pub conv_b: Vec<Tensor<S>>,
    pub lstm_wx: Tensor<S>,
    pub lstm_wh: Tensor<S>,
    pub lstm_b: Tensor<S>,
    pub s2l: Projection<S>,
    pub l2s: Projection<S>,
    pub head_w: Tensor<S>,
    pub head_b: Tensor<S>,
}

fn uniform_init<S: Scalar>(shape: &[usize], bound: f64, rng: &mut Rng) -> Tensor<S> {
    let data = (0..shape.iter().product::<usize>())
        .map(|_| S::from_f64(rng.uniform(-bound, bound)))
        .collect();
    Tensor::from_vec(shape, data)
}

/// Kaiming-uniform bound for weights feeding a ReLU.
fn relu_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

/// Xavier-uniform bound for linear maps without a rectifier.
fn linear_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl<S: Scalar> ModelParams<S> {
    /// Fresh parameters: Kaiming-uniform conv weights, Xavier-uniform
    /// recurrent/projection/head weights, zero biases (forget gate +1),
    /// zero filter weights so the mask starts at 0.5.
    pub fn init(hyper: HyperConfig, ablation: Ablation, seed: u64) -> Self {
        let mut stream = 0u64;
        let mut next = || {
            stream += 1;
            Rng::derive(seed, stream)
        };

        let filter_w = Tensor::zeros(&[hyper.channels, hyper.n_bins()]);

        let mut conv_w = Vec::new();
        let mut conv_b = Vec::new();
        let mut in_ch = hyper.channels;
        for spec in &hyper.conv {
            conv_w.push(uniform_init(
                &[spec.out_channels, in_ch, spec.kernel],
                relu_bound(in_ch * spec.kernel),
                &mut next(),
            ));
            conv_b.push(Tensor::zeros(&[spec.out_channels]));
            in_ch = spec.out_channels;
        }

        let h = hyper.lstm_hidden;
        let lstm_wx = uniform_init(
            &[4 * h, hyper.channels],
            linear_bound(hyper.channels, h),
            &mut next(),
        );
        let lstm_wh = uniform_init(&[4 * h, h], linear_bound(h, h), &mut next());
        let mut lstm_b = Tensor::zeros(&[4 * h]);
        for j in 0..h {
            lstm_b.data_mut()[h + j] = S::ONE; // forget-gate bias
        }

        let (d_s, d_l) = (hyper.d_cnn(), hyper.lstm_hidden);
        // Query/key projections carry a gain so the pre-softmax scores
        // have O(1) spread under typical feature magnitudes; without it
        // the softmax starts uniform and its gradients are too weak to
        // ever differentiate.
        const QK_GAIN: f64 = 4.0;
        let s2l = Projection {
            wq: uniform_init(
                &[d_s, hyper.d_k],
                QK_GAIN * linear_bound(d_s, hyper.d_k),
                &mut next(),
            ),
            wk: uniform_init(
                &[d_l, hyper.d_k],
                QK_GAIN * linear_bound(d_l, hyper.d_k),
                &mut next(),
            ),
            wv: uniform_init(&[d_l, hyper.d_v], linear_bound(d_l, hyper.d_v), &mut next()),
        };
        let l2s = Projection {
            wq: uniform_init(
                &[d_l, hyper.d_k],
                QK_GAIN * linear_bound(d_l, hyper.d_k),
                &mut next(),
            ),
            wk: uniform_init(
                &[d_s, hyper.d_k],
                QK_GAIN * linear_bound(d_s, hyper.d_k),
                &mut next(),
            ),
            wv: uniform_init(&[d_s, hyper.d_v], linear_bound(d_s, hyper.d_v), &mut next()),
        };

        let fused = hyper.fused_dim(ablation);
        let head_w = uniform_init(&[fused, 1], linear_bound(fused, 1), &mut next());
        let head_b = Tensor::zeros(&[1, 1]);

        ModelParams {
            hyper,
            ablation,
            filter_w,
            conv_w,
            conv_b,
            lstm_wx,
            lstm_wh,
            lstm_b,
            s2l,
            l2s,
            head_w,
            head_b,
        }
    }

    /// Canonical (name, tensor) listing of every parameter, live or not.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out: Vec<(String, &Tensor<S>)> = vec![("filter.w".to_string(), &self.filter_w)];
        for (i, (w, b)) in self.conv_w.iter().zip(self.conv_b.iter()).enumerate() {
            out.push((format!("cnn.{}.w", i), w));
            out.push((format!("cnn.{}.b", i), b));
        }
        out.push(("lstm.wx".to_string(), &self.lstm_wx));
        out.push(("lstm.wh".to_string(), &self.lstm_wh));
        out.push(("lstm.b".to_string(), &self.lstm_b));
        out.push(("attn.s2l.wq".to_string(), &self.s2l.wq));
        out.push(("attn.s2l.wk".to_string(), &self.s2l.wk));
        out.push(("attn.s2l.wv".to_string(), &self.s2l.wv));
        out.push(("attn.l2s.wq".to_string(), &self.l2s.wq));
        out.push(("attn.l2s.wk".to_string(), &self.l2s.wk));
        out.push(("attn.l2s.wv".to_string(), &self.l2s.wv));
        out.push(("head.w".to_string(), &self.head_w));
        out.push(("head.b".to_string(), &self.head_b));
        out
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        if name == "filter.w" {
            return Some(&mut self.filter_w);
        }
        if let Some(rest) = name.strip_prefix("cnn.") {
            let (idx, kind) = rest.split_once('.')?;
            let idx: usize = idx.parse().ok()?;
            return match kind {
                "w" => self.conv_w.get_mut(idx),
                "b" => self.conv_b.get_mut(idx),
                _ => None,
            };
        }
        match name {
            "lstm.wx" => Some(&mut self.lstm_wx),
            "lstm.wh" => Some(&mut self.lstm_wh),
            "lstm.b" => Some(&mut self.lstm_b),
            "attn.s2l.wq" => Some(&mut self.s2l.wq),
            "attn.s2l.wk" => Some(&mut self.s2l.wk),
            "attn.s2l.wv" => Some(&mut self.s2l.wv),
            "attn.l2s.wq" => Some(&mut self.l2s.wq),
            "attn.l2s.wk" => Some(&mut self.l2s.wk),
            "attn.l2s.wv" => Some(&mut self.l2s.wv),
            "head.w" => Some(&mut self.head_w),
            "head.b" => Some(&mut self.head_b),
            _ => None,
        }
    }

    /// Names of parameters the ablation variant actually trains.
    pub fn live_param_names(&self) -> Vec<String> {
        self.named_tensors()
            .into_iter()
            .map(|(n, _)| n)
            .filter(|n| self.is_live(n))
            .collect()
    }

    fn is_live(&self, name: &str) -> bool {
        if name.starts_with("filter.") {
            return self.ablation.uses_safb();
        }
        if name.starts_with("lstm.") {
            return self.ablation.uses_lstm();
        }
        if name.starts_with("attn.") {
            return self.ablation.uses_attention();
        }
        true
    }

    pub fn cast<T: Scalar>(&self) -> ModelParams<T> {
        ModelParams {
            hyper: self.hyper.clone(),
            ablation: self.ablation,
            filter_w: self.filter_w.cast(),
            conv_w: self.conv_w.iter().map(Tensor::cast).collect(),
            conv_b: self.conv_b.iter().map(Tensor::cast).collect(),
            lstm_wx: self.lstm_wx.cast(),
            lstm_wh: self.lstm_wh.cast(),
            lstm_b: self.lstm_b.cast(),
            s2l: Projection {
                wq: self.s2l.wq.cast(),
                wk: self.s2l.wk.cast(),
                wv: self.s2l.wv.cast(),
            },
            l2s: Projection {
                wq: self.l2s.wq.cast(),
                wk: self.l2s.wk.cast(),
                wv: self.l2s.wv.cast(),
            },
            head_w: self.head_w.cast(),
            head_b: self.head_b.cast(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.all_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A built forward pass: the graph plus handles to the nodes callers
/// care about.
pub struct Forward<S: Scalar> {
    pub graph: Graph<S>,
    pub prob: NodeId,
    pub logit: NodeId,
    pub input: NodeId,
    /// Post-activation output of the final conv layer, (d_s, T_s).
    pub conv_feature: NodeId,
    pub param_nodes: Vec<(String, NodeId)>,
}

/// Standardize each channel to zero mean, unit variance.
pub fn standardize<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let (c, t) = (x.rows(), x.cols());
    let mut out = Tensor::zeros(&[c, t]);
    let eps = S::from_f64(1e-6);
    let inv_t = S::ONE / S::from_f64(t as f64);
    for ch in 0..c {
        let row = x.row(ch);
        let mean: S = row.iter().copied().sum::<S>() * inv_t;
        let var: S = row
            .iter()
            .map(|&v| (v - mean) * (v - mean))
            .sum::<S>()
            * inv_t;
        let denom = var.sqrt() + eps;
        for (dst, &src) in out.row_mut(ch).iter_mut().zip(row.iter()) {
            *dst = (src - mean) / denom;
        }
    }
    out
}

fn attention_block<S: Scalar>(
    g: &mut Graph<S>,
    query_feats: NodeId,
    kv_feats: NodeId,
    wq: NodeId,
    wk: NodeId,
    wv: NodeId,
    d_k: usize,
) -> NodeId {
    let q = g.matmul(query_feats, wq);
    let k = g.matmul(kv_feats, wk);
    let v = g.matmul(kv_feats, wv);
    let scores = g.matmul_nt(q, k);
    let scaled = g.scale(scores, S::from_f64(1.0 / (d_k as f64).sqrt()));
    let weights = g.softmax_rows(scaled);
    g.matmul(weights, v)
}

/// Build the full forward graph for one (C, T) input.
pub fn build_forward<S: Scalar>(
    params: &ModelParams<S>,
    x: &Tensor<S>,
    mode: Mode,
    dropout_rng: Option<&mut Rng>,
    input_grad: bool,
) -> Result<Forward<S>, ModelError> {
    let hyper = &params.hyper;
    if x.shape() != [hyper.channels, hyper.window_len] {
        return Err(ModelError::Shape(format!(
            "input shape {:?}, expected ({}, {})",
            x.shape(),
            hyper.channels,
            hyper.window_len
        )));
    }
    if !x.all_finite() {
        return Err(ModelError::Shape("input contains non-finite values".to_string()));
    }
    let mut t = hyper.window_len;
    for (i, spec) in hyper.conv.iter().enumerate() {
        t = t.div_ceil(spec.stride);
        if t == 0 {
            return Err(ModelError::Shape(format!(
                "input too short for conv layer {}",
                i
            )));
        }
    }
    if params.ablation.uses_lstm() && hyper.t_lstm() == 0 {
        return Err(ModelError::Shape(format!(
            "window {} shorter than lstm pool {}",
            hyper.window_len, hyper.lstm_pool
        )));
    }
    if mode == Mode::Train && hyper.dropout_p > 0.0 && dropout_rng.is_none() {
        return Err(ModelError::MissingDropoutRng);
    }

    let mut g = Graph::new();
    let standardized = if hyper.standardize {
        standardize(x)
    } else {
        x.clone()
    };
    let input = g.leaf(standardized, input_grad);

    let mut param_nodes = Vec::new();
    let mut leaf_param = |g: &mut Graph<S>, name: &str, tensor: &Tensor<S>| -> NodeId {
        let id = g.leaf(tensor.clone(), true);
        param_nodes.push((name.to_string(), id));
        id
    };

    // Stage 1: adaptive spectral filtering (identity under no_safb).
    let filtered = if params.ablation.uses_safb() {
        let w = leaf_param(&mut g, "filter.w", &params.filter_w);
        g.spectral_mask(input, w)
    } else {
        input
    };

    // Stage 2a: CNN path.
    let mut feat = filtered;
    for (i, spec) in hyper.conv.iter().enumerate() {
        let w = leaf_param(&mut g, &format!("cnn.{}.w", i), &params.conv_w[i]);
        let b = leaf_param(&mut g, &format!("cnn.{}.b", i), &params.conv_b[i]);
        let conv = g.conv1d(feat, w, b, spec.stride);
        feat = g.relu(conv);
    }
    let conv_feature = feat;
    let h_cnn = g.transpose(conv_feature); // (T_s, d_s)

    // Stage 2b: LSTM path (absent under single_path).
    let h_lstm = if params.ablation.uses_lstm() {
        let pooled = g.avg_pool_cols(filtered, hyper.lstm_pool);
        let seq = g.transpose(pooled); // (T_l, C)
        let wx = leaf_param(&mut g, "lstm.wx", &params.lstm_wx);
        let wh = leaf_param(&mut g, "lstm.wh", &params.lstm_wh);
        let b = leaf_param(&mut g, "lstm.b", &params.lstm_b);
        Some(g.lstm(seq, wx, wh, b))
    } else {
        None
    };

    // Stage 3: fusion.
    let fused = match params.ablation {
        Ablation::Full | Ablation::NoSafb => {
            let h_lstm = h_lstm.expect("lstm path present");
            let s2l_wq = leaf_param(&mut g, "attn.s2l.wq", &params.s2l.wq);
            let s2l_wk = leaf_param(&mut g, "attn.s2l.wk", &params.s2l.wk);
            let s2l_wv = leaf_param(&mut g, "attn.s2l.wv", &params.s2l.wv);
            let a_s2l = attention_block(&mut g, h_cnn, h_lstm, s2l_wq, s2l_wk, s2l_wv, hyper.d_k);
            let l2s_wq = leaf_param(&mut g, "attn.l2s.wq", &params.l2s.wq);
            let l2s_wk = leaf_param(&mut g, "attn.l2s.wk", &params.l2s.wk);
            let l2s_wv = leaf_param(&mut g, "attn.l2s.wv", &params.l2s.wv);
            let a_l2s = attention_block(&mut g, h_lstm, h_cnn, l2s_wq, l2s_wk, l2s_wv, hyper.d_k);
            g.flatten_concat(&[a_s2l, a_l2s])
        }
        Ablation::NoCrossAttn => {
            let h_lstm = h_lstm.expect("lstm path present");
            g.flatten_concat(&[h_cnn, h_lstm])
        }
        Ablation::SinglePath => g.flatten_concat(&[h_cnn]),
    };

    // Stage 4: head with train-mode dropout.
    let head_in = if mode == Mode::Train && hyper.dropout_p > 0.0 {
        let rng = dropout_rng.expect("checked above");
        g.dropout(fused, hyper.dropout_p, rng)
    } else {
        fused
    };
    let expected = hyper.fused_dim(params.ablation);
    if g.value(head_in).len() != expected || params.head_w.shape() != [expected, 1] {
        return Err(ModelError::Shape(format!(
            "head expects {} inputs, fused vector has {} and head.w is {:?}",
            expected,
            g.value(head_in).len(),
            params.head_w.shape()
        )));
    }
    let head_w = leaf_param(&mut g, "head.w", &params.head_w);
    let head_b = leaf_param(&mut g, "head.b", &params.head_b);
    let projected = g.matmul(head_in, head_w);
    let logit = g.add(projected, head_b);
    let prob = g.sigmoid(logit);

    Ok(Forward {
        graph: g,
        prob,
        logit,
        input,
        conv_feature,
        param_nodes,
    })
}

/// Eval-mode probability for one input.
pub fn forward<S: Scalar>(params: &ModelParams<S>, x: &Tensor<S>) -> Result<f64, ModelError> {
    let built = build_forward(params, x, Mode::Eval, None, false)?;
    Ok(built.graph.value(built.prob).data()[0].to_f64())
}

/// The adaptive filter stage on its own: irfft(rfft(x) ⊙ sigmoid(w)).
pub fn safb_forward<S: Scalar>(
    x: &Tensor<S>,
    filter_w: &Tensor<S>,
) -> Result<Tensor<S>, ModelError> {
    let (c, t) = (x.rows(), x.cols());
    if filter_w.shape() != [c, fft::n_bins(t)] {
        return Err(ModelError::Shape(format!(
            "filter weights {:?} do not match ({}, {}) input",
            filter_w.shape(),
            c,
            t
        )));
    }
    let mut g = Graph::new();
    let xn = g.leaf(x.clone(), false);
    let wn = g.leaf(filter_w.clone(), false);
    let out = g.spectral_mask(xn, wn);
    Ok(g.value(out).clone())
}

/// The CNN path on its own, returning time-major features (T_s, d_s).
pub fn cnn_path<S: Scalar>(
    params: &ModelParams<S>,
    xhat: &Tensor<S>,
) -> Result<Tensor<S>, ModelError> {
    if xhat.rows() != params.hyper.channels {
        return Err(ModelError::Shape(format!(
            "expected {} channels, got {}",
            params.hyper.channels,
            xhat.rows()
        )));
    }
    let mut g = Graph::new();
    let mut feat = g.leaf(xhat.clone(), false);
    for (i, spec) in params.hyper.conv.iter().enumerate() {
        let w = g.leaf(params.conv_w[i].clone(), false);
        let b = g.leaf(params.conv_b[i].clone(), false);
        let conv = g.conv1d(feat, w, b, spec.stride);
        feat = g.relu(conv);
    }
    let out = g.transpose(feat);
    Ok(g.value(out).clone())
}

/// The LSTM path on its own, returning the hidden sequence (T_l, d_l).
pub fn lstm_path<S: Scalar>(
    params: &ModelParams<S>,
    xhat: &Tensor<S>,
) -> Result<Tensor<S>, ModelError> {
    if xhat.cols() < params.hyper.lstm_pool {
        return Err(ModelError::Shape(format!(
            "window {} shorter than lstm pool {}",
            xhat.cols(),
            params.hyper.lstm_pool
        )));
    }
    let mut g = Graph::new();
    let x = g.leaf(xhat.clone(), false);
    let pooled = g.avg_pool_cols(x, params.hyper.lstm_pool);
    let seq = g.transpose(pooled);
    let wx = g.leaf(params.lstm_wx.clone(), false);
    let wh = g.leaf(params.lstm_wh.clone(), false);
    let b = g.leaf(params.lstm_b.clone(), false);
    let h = g.lstm(seq, wx, wh, b);
    Ok(g.value(h).clone())
}

/// One cross-attention direction on its own:
/// softmax(QKᵀ/√d_k)·V with Q from the query features, K and V from the
/// key/value features.
pub fn cross_attention<S: Scalar>(
    query_feats: &Tensor<S>,
    kv_feats: &Tensor<S>,
    proj: &Projection<S>,
    d_k: usize,
) -> Result<Tensor<S>, ModelError> {
    if proj.wq.rows() != query_feats.cols()
        || proj.wk.rows() != kv_feats.cols()
        || proj.wv.rows() != kv_feats.cols()
        || proj.wq.cols() != proj.wk.cols()
    {
        return Err(ModelError::Shape(format!(
            "projection shapes wq {:?} wk {:?} wv {:?} inconsistent with features {:?} / {:?}",
            proj.wq.shape(),
            proj.wk.shape(),
            proj.wv.shape(),
            query_feats.shape(),
            kv_feats.shape()
        )));
    }
    let mut g = Graph::new();
    let q_in = g.leaf(query_feats.clone(), false);
    let kv_in = g.leaf(kv_feats.clone(), false);
    let wq = g.leaf(proj.wq.clone(), false);
    let wk = g.leaf(proj.wk.clone(), false);
    let wv = g.leaf(proj.wv.clone(), false);
    let out = attention_block(&mut g, q_in, kv_in, wq, wk, wv, d_k);
    Ok(g.value(out).clone())
}

/// The classification head on its own: concatenate the flattened
/// attention outputs, optional inverted dropout, affine map, sigmoid.
pub fn fuse_and_classify<S: Scalar>(
    a_s2l: &Tensor<S>,
    a_l2s: &Tensor<S>,
    head_w: &Tensor<S>,
    head_b: &Tensor<S>,
    dropout_p: f64,
    dropout_rng: Option<&mut Rng>,
) -> Result<f64, ModelError> {
    let fused_len = a_s2l.len() + a_l2s.len();
    if head_w.shape() != [fused_len, 1] {
        return Err(ModelError::Shape(format!(
            "head.w {:?} does not match fused length {}",
            head_w.shape(),
            fused_len
        )));
    }
    let mut g = Graph::new();
    let a = g.leaf(a_s2l.clone(), false);
    let b = g.leaf(a_l2s.clone(), false);
    let fused = g.flatten_concat(&[a, b]);
    let head_in = match (dropout_p > 0.0, dropout_rng) {
        (true, Some(rng)) => g.dropout(fused, dropout_p, rng),
        (true, None) => return Err(ModelError::MissingDropoutRng),
        (false, _) => fused,
    };
    let w = g.leaf(head_w.clone(), false);
    let bb = g.leaf(head_b.clone(), false);
    let mm = g.matmul(head_in, w);
    let logit = g.add(mm, bb);
    let prob = g.sigmoid(logit);
    Ok(g.value(prob).data()[0].to_f64())
}

/// Eval-mode probability for one stored segment.
pub fn predict<S: Scalar>(
    params: &ModelParams<S>,
    seg_data: &Tensor<f32>,
) -> Result<f64, ModelError> {
    forward(params, &seg_data.cast::<S>())
}
