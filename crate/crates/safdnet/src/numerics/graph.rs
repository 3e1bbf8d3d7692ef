//! Define-by-run reverse-mode differentiation over tensors.
//!
//! Each model forward pass builds a fresh `Graph`: operations evaluate
//! eagerly, record their inputs, and `backward` walks the tape in reverse
//! to accumulate cotangents. The op set is exactly what the network needs;
//! nothing here is general-purpose tensor algebra.

use super::fft::{self, ComplexSpectrum};
use super::scalar::Scalar;
use super::tensor::{self, Tensor};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

/// Valid output range [j0, j1) for one kernel tap kk, plus the input
/// index of the first valid position. For j in range, the tap reads
/// x[start + (j − j0)·stride].
fn tap_range(
    t: usize,
    t_out: usize,
    stride: usize,
    pad_left: usize,
    kk: usize,
) -> (usize, usize, usize) {
    let j0 = if kk >= pad_left {
        0
    } else {
        (pad_left - kk).div_ceil(stride).min(t_out)
    };
    let j1 = if t + pad_left > kk {
        ((t - 1 + pad_left - kk) / stride + 1).clamp(j0, t_out)
    } else {
        j0
    };
    let start = if j0 < j1 {
        j0 * stride + kk - pad_left
    } else {
        0
    };
    (j0, j1, start)
}

struct LstmCache<S> {
    /// Post-activation gates per step, laid out (T, 4H) as [i f g o].
    gates: Tensor<S>,
    /// Cell states per step, (T, H).
    cells: Tensor<S>,
    /// tanh of cell states per step, (T, H).
    tanh_cells: Tensor<S>,
}

enum Op<S> {
    Leaf,
    Add(NodeId, NodeId),
    Scale(NodeId, S),
    MatMul(NodeId, NodeId),
    MatMulNT(NodeId, NodeId),
    Conv1d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        pad_left: usize,
        /// im2col matrix (t_out, c_in·k) reused by the backward pass.
        col: Tensor<S>,
    },
    Lstm {
        x: NodeId,
        wx: NodeId,
        wh: NodeId,
        b: NodeId,
        cache: LstmCache<S>,
    },
    SpectralMask {
        x: NodeId,
        w: NodeId,
        spectrum: ComplexSpectrum<S>,
        mask: Tensor<S>,
    },
    AvgPoolCols {
        x: NodeId,
        factor: usize,
    },
    Transpose(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    SoftmaxRows(NodeId),
    FlattenConcat(Vec<NodeId>),
    Dropout {
        x: NodeId,
        mask: Vec<bool>,
        keep_inv: S,
    },
    BceWithLogits {
        z: NodeId,
        targets: Vec<S>,
    },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    needs_grad: bool,
}

pub struct Graph<S: Scalar> {
    nodes: Vec<Node<S>>,
}

/// Cotangent tensors per node after a backward pass.
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<S>> {
        self.grads[id.0].as_ref()
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor<S>> {
        self.grads[id.0].take()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Insert a leaf tensor. `needs_grad` marks trainable parameters and
    /// inputs whose sensitivities are wanted.
    pub fn leaf(&mut self, value: Tensor<S>, needs_grad: bool) -> NodeId {
        self.push(value, Op::Leaf, needs_grad)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "add shapes");
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data().iter())
            .map(|(&x, &y)| x + y)
            .collect();
        let value = Tensor::from_vec(self.value(a).shape(), data);
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), needs)
    }

    pub fn scale(&mut self, a: NodeId, c: S) -> NodeId {
        let value = self.value(a).map(|v| v * c);
        let needs = self.needs(a);
        self.push(value, Op::Scale(a, c), needs)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = tensor::matmul(self.value(a), self.value(b));
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), needs)
    }

    /// A · Bᵀ without materializing the transpose.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = tensor::matmul_nt(self.value(a), self.value(b));
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMulNT(a, b), needs)
    }

    /// Strided 1-D convolution with "same" padding: x (C_in, T),
    /// w (C_out, C_in, K), b (C_out) -> (C_out, ceil(T / stride)).
    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize) -> NodeId {
        let (c_in, t) = (self.value(x).rows(), self.value(x).cols());
        let wshape = self.value(w).shape().to_vec();
        assert_eq!(wshape.len(), 3, "conv weight must be (C_out, C_in, K)");
        let (c_out, c_in_w, k) = (wshape[0], wshape[1], wshape[2]);
        assert_eq!(c_in, c_in_w, "conv input channels");
        assert_eq!(self.value(b).len(), c_out, "conv bias length");
        assert!(t > 0 && stride > 0);

        let t_out = t.div_ceil(stride);
        let pad_total = ((t_out - 1) * stride + k).saturating_sub(t);
        let pad_left = pad_total / 2;

        // im2col: gather each output position's receptive field into a
        // row, then the convolution is one matrix product against the
        // weight tensor viewed as (c_out, c_in·k).
        let col = {
            let xv = self.value(x);
            let mut col = Tensor::zeros(&[t_out, c_in * k]);
            for c in 0..c_in {
                let xrow = xv.row(c);
                for kk in 0..k {
                    let (j0, j1, start) = tap_range(t, t_out, stride, pad_left, kk);
                    for j in j0..j1 {
                        let v = xrow[start + (j - j0) * stride];
                        col.set2(j, c * k + kk, v);
                    }
                }
            }
            col
        };
        let mut out = {
            let wv = self.value(w);
            let w2d = Tensor::from_vec(&[c_out, c_in * k], wv.data().to_vec());
            tensor::matmul_nt(&w2d, &col)
        };
        {
            let bv = self.value(b);
            for o in 0..c_out {
                let bias = bv.data()[o];
                for v in out.row_mut(o).iter_mut() {
                    *v += bias;
                }
            }
        }
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(
            out,
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                pad_left,
                col,
            },
            needs,
        )
    }

    /// Single-layer LSTM over a time-major sequence x (T, C); returns the
    /// full hidden-state sequence (T, H). Weights: wx (4H, C), wh (4H, H),
    /// b (4H), gate order [input, forget, cell, output].
    pub fn lstm(&mut self, x: NodeId, wx: NodeId, wh: NodeId, b: NodeId) -> NodeId {
        let (t, c) = (self.value(x).rows(), self.value(x).cols());
        let h4 = self.value(wx).rows();
        assert_eq!(h4 % 4, 0, "lstm weight rows must be 4H");
        let h = h4 / 4;
        assert_eq!(self.value(wx).cols(), c, "lstm input width");
        assert_eq!(self.value(wh).shape(), &[h4, h], "lstm recurrent shape");
        assert_eq!(self.value(b).len(), h4, "lstm bias length");
        assert!(t > 0, "lstm needs at least one step");

        let mut hidden = Tensor::zeros(&[t, h]);
        let mut gates = Tensor::zeros(&[t, 4 * h]);
        let mut cells = Tensor::zeros(&[t, h]);
        let mut tanh_cells = Tensor::zeros(&[t, h]);
        {
            let xv = self.value(x);
            let whv = self.value(wh);
            let bv = self.value(b);
            // Input contributions for every step in one matrix product;
            // only the recurrent part stays sequential.
            let input_proj = tensor::matmul_nt(xv, self.value(wx));
            let mut h_prev = vec![S::ZERO; h];
            let mut c_prev = vec![S::ZERO; h];
            let mut pre = vec![S::ZERO; 4 * h];
            for step in 0..t {
                let iprow = input_proj.row(step);
                for g in 0..4 * h {
                    pre[g] = bv.data()[g] + iprow[g] + tensor::dot(whv.row(g), &h_prev);
                }
                for j in 0..h {
                    let i_g = pre[j].sigmoid();
                    let f_g = pre[h + j].sigmoid();
                    let g_g = pre[2 * h + j].tanh();
                    let o_g = pre[3 * h + j].sigmoid();
                    let c_t = f_g * c_prev[j] + i_g * g_g;
                    let tc = c_t.tanh();
                    let h_t = o_g * tc;
                    gates.set2(step, j, i_g);
                    gates.set2(step, h + j, f_g);
                    gates.set2(step, 2 * h + j, g_g);
                    gates.set2(step, 3 * h + j, o_g);
                    cells.set2(step, j, c_t);
                    tanh_cells.set2(step, j, tc);
                    hidden.set2(step, j, h_t);
                    c_prev[j] = c_t;
                    h_prev[j] = h_t;
                }
            }
        }
        let needs = self.needs(x) || self.needs(wx) || self.needs(wh) || self.needs(b);
        self.push(
            hidden,
            Op::Lstm {
                x,
                wx,
                wh,
                b,
                cache: LstmCache {
                    gates,
                    cells,
                    tanh_cells,
                },
            },
            needs,
        )
    }

    /// Frequency-domain filtering: irfft(rfft(x) ⊙ sigmoid(w)) per channel.
    /// x is (C, T), w is (C, ⌊T/2⌋+1).
    pub fn spectral_mask(&mut self, x: NodeId, w: NodeId) -> NodeId {
        let (c, t) = (self.value(x).rows(), self.value(x).cols());
        let f = fft::n_bins(t);
        assert_eq!(
            self.value(w).shape(),
            &[c, f],
            "filter weights must be (C, F)"
        );
        let spectrum = fft::rfft_channels(self.value(x)).expect("spectral_mask forward rfft");
        let mask = self.value(w).map(|v| v.sigmoid());
        let mut masked = ComplexSpectrum::zeros(c, f);
        for idx in 0..c * f {
            masked.re[idx] = spectrum.re[idx] * mask.data()[idx];
            masked.im[idx] = spectrum.im[idx] * mask.data()[idx];
        }
        let value = fft::irfft_channels(&masked, t).expect("spectral_mask forward irfft");
        let needs = self.needs(x) || self.needs(w);
        self.push(
            value,
            Op::SpectralMask {
                x,
                w,
                spectrum,
                mask,
            },
            needs,
        )
    }

    /// Average-pool the column (time) axis by `factor`, truncating the
    /// remainder: (C, T) -> (C, T / factor).
    pub fn avg_pool_cols(&mut self, x: NodeId, factor: usize) -> NodeId {
        let (c, t) = (self.value(x).rows(), self.value(x).cols());
        assert!(factor >= 1);
        let t_out = t / factor;
        assert!(t_out > 0, "pool factor {} longer than input {}", factor, t);
        let inv = S::ONE / S::from_f64(factor as f64);
        let mut out = Tensor::zeros(&[c, t_out]);
        for ch in 0..c {
            let row = self.value(x).row(ch);
            for j in 0..t_out {
                let sum: S = row[j * factor..(j + 1) * factor].iter().copied().sum();
                out.set2(ch, j, sum * inv);
            }
        }
        let needs = self.needs(x);
        self.push(out, Op::AvgPoolCols { x, factor }, needs)
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).transposed();
        let needs = self.needs(x);
        self.push(value, Op::Transpose(x), needs)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| v.sigmoid());
        let needs = self.needs(x);
        self.push(value, Op::Sigmoid(x), needs)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| v.maxv(S::ZERO));
        let needs = self.needs(x);
        self.push(value, Op::Relu(x), needs)
    }

    /// Row-wise softmax with the usual max-subtraction for stability.
    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let (r, c) = (self.value(x).rows(), self.value(x).cols());
        let mut out = Tensor::zeros(&[r, c]);
        for i in 0..r {
            let row = self.value(x).row(i);
            let mut mx = row[0];
            for &v in row {
                mx = mx.maxv(v);
            }
            let orow = out.row_mut(i);
            let mut sum = S::ZERO;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - mx).exp();
                orow[j] = e;
                sum += e;
            }
            for v in orow.iter_mut() {
                *v /= sum;
            }
        }
        let needs = self.needs(x);
        self.push(out, Op::SoftmaxRows(x), needs)
    }

    /// Flatten every input to a vector and concatenate in order.
    pub fn flatten_concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let n = data.len();
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(
            Tensor::from_vec(&[n], data),
            Op::FlattenConcat(parts.to_vec()),
            needs,
        )
    }

    /// Inverted dropout: keep with probability 1-p, scale kept entries by
    /// 1/(1-p). Only meaningful in train mode; eval skips the op entirely.
    pub fn dropout(&mut self, x: NodeId, p: f64, rng: &mut Rng) -> NodeId {
        assert!((0.0..1.0).contains(&p), "dropout probability in [0, 1)");
        let n = self.value(x).len();
        let mask: Vec<bool> = (0..n).map(|_| rng.next_f64() >= p).collect();
        let keep_inv = S::from_f64(1.0 / (1.0 - p));
        let data = self
            .value(x)
            .data()
            .iter()
            .zip(mask.iter())
            .map(|(&v, &keep)| if keep { v * keep_inv } else { S::ZERO })
            .collect();
        let value = Tensor::from_vec(self.value(x).shape(), data);
        let needs = self.needs(x);
        self.push(value, Op::Dropout { x, mask, keep_inv }, needs)
    }

    /// Mean binary cross-entropy straight from logits:
    /// mean(max(z,0) − y·z + ln(1 + e^{−|z|})). Equals the clamped
    /// probability-space loss for non-saturating logits but keeps exact
    /// gradients (σ(z) − y)/n everywhere.
    pub fn bce_with_logits(&mut self, z: NodeId, targets: &[S]) -> NodeId {
        let n = self.value(z).len();
        assert_eq!(n, targets.len(), "logit/target count");
        let inv_n = 1.0 / n as f64;
        let mut acc = 0.0;
        for (&zi, &yi) in self.value(z).data().iter().zip(targets.iter()) {
            let zf = zi.to_f64();
            let yf = yi.to_f64();
            acc += zf.max(0.0) - yf * zf + (-zf.abs()).exp().ln_1p();
        }
        let value = Tensor::scalar(S::from_f64(acc * inv_n));
        let needs = self.needs(z);
        self.push(
            value,
            Op::BceWithLogits {
                z,
                targets: targets.to_vec(),
            },
            needs,
        )
    }

    /// Reverse pass from a scalar loss node. Returns cotangents for every
    /// node on the path to a grad-requiring leaf.
    pub fn backward(&self, loss: NodeId) -> Gradients<S> {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(S::ONE));

        for id in (0..=loss.0).rev() {
            if grads[id].is_none() || !self.nodes[id].needs_grad {
                continue;
            }
            let g = grads[id].take().unwrap();
            self.backprop_node(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Gradients { grads }
    }

    fn accum(&self, grads: &mut [Option<Tensor<S>>], id: NodeId, delta: Tensor<S>) {
        if !self.needs(id) {
            return;
        }
        match &mut grads[id.0] {
            Some(t) => t.add_scaled(&delta, S::ONE),
            slot @ None => *slot = Some(delta),
        }
    }

    fn backprop_node(&self, id: usize, g: &Tensor<S>, grads: &mut [Option<Tensor<S>>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accum(grads, *a, g.clone());
                self.accum(grads, *b, g.clone());
            }
            Op::Scale(a, c) => {
                self.accum(grads, *a, g.map(|v| v * *c));
            }
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    self.accum(grads, *a, tensor::matmul_nt(g, self.value(*b)));
                }
                if self.needs(*b) {
                    self.accum(grads, *b, tensor::matmul_tn(self.value(*a), g));
                }
            }
            Op::MatMulNT(a, b) => {
                if self.needs(*a) {
                    self.accum(grads, *a, tensor::matmul(g, self.value(*b)));
                }
                if self.needs(*b) {
                    self.accum(grads, *b, tensor::matmul_tn(g, self.value(*a)));
                }
            }
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                pad_left,
                col,
            } => self.backprop_conv(g, grads, *x, *w, *b, *stride, *pad_left, col),
            Op::Lstm {
                x,
                wx,
                wh,
                b,
                cache,
            } => self.backprop_lstm(id, g, grads, *x, *wx, *wh, *b, cache),
            Op::SpectralMask {
                x,
                w,
                spectrum,
                mask,
            } => self.backprop_spectral_mask(g, grads, *x, *w, spectrum, mask),
            Op::AvgPoolCols { x, factor } => {
                let (c, t) = (self.value(*x).rows(), self.value(*x).cols());
                let inv = S::ONE / S::from_f64(*factor as f64);
                let mut dx = Tensor::zeros(&[c, t]);
                for ch in 0..c {
                    let grow = g.row(ch);
                    let drow = dx.row_mut(ch);
                    for (j, &gj) in grow.iter().enumerate() {
                        let spread = gj * inv;
                        for v in drow[j * factor..(j + 1) * factor].iter_mut() {
                            *v += spread;
                        }
                    }
                }
                self.accum(grads, *x, dx);
            }
            Op::Transpose(x) => {
                self.accum(grads, *x, g.transposed());
            }
            Op::Sigmoid(x) => {
                let y = &self.nodes[id].value;
                let data = g
                    .data()
                    .iter()
                    .zip(y.data().iter())
                    .map(|(&gv, &yv)| gv * yv * (S::ONE - yv))
                    .collect();
                self.accum(grads, *x, Tensor::from_vec(y.shape(), data));
            }
            Op::Relu(x) => {
                let y = &self.nodes[id].value;
                let data = g
                    .data()
                    .iter()
                    .zip(y.data().iter())
                    .map(|(&gv, &yv)| if yv > S::ZERO { gv } else { S::ZERO })
                    .collect();
                self.accum(grads, *x, Tensor::from_vec(y.shape(), data));
            }
            Op::SoftmaxRows(x) => {
                let y = &self.nodes[id].value;
                let (r, c) = (y.rows(), y.cols());
                let mut dx = Tensor::zeros(&[r, c]);
                for i in 0..r {
                    let yrow = y.row(i);
                    let grow = g.row(i);
                    let dot: S = yrow.iter().zip(grow.iter()).map(|(&a, &b)| a * b).sum();
                    let drow = dx.row_mut(i);
                    for j in 0..c {
                        drow[j] = yrow[j] * (grow[j] - dot);
                    }
                }
                self.accum(grads, *x, dx);
            }
            Op::FlattenConcat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    let slice = g.data()[offset..offset + len].to_vec();
                    self.accum(grads, p, Tensor::from_vec(self.value(p).shape(), slice));
                    offset += len;
                }
            }
            Op::Dropout { x, mask, keep_inv } => {
                let data = g
                    .data()
                    .iter()
                    .zip(mask.iter())
                    .map(|(&gv, &keep)| if keep { gv * *keep_inv } else { S::ZERO })
                    .collect();
                self.accum(grads, *x, Tensor::from_vec(self.value(*x).shape(), data));
            }
            Op::BceWithLogits { z, targets } => {
                let gscalar = g.data()[0];
                let n_inv = S::from_f64(1.0 / targets.len() as f64);
                let data = self
                    .value(*z)
                    .data()
                    .iter()
                    .zip(targets.iter())
                    .map(|(&zi, &yi)| gscalar * n_inv * (zi.sigmoid() - yi))
                    .collect();
                self.accum(grads, *z, Tensor::from_vec(self.value(*z).shape(), data));
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_conv(
        &self,
        g: &Tensor<S>,
        grads: &mut [Option<Tensor<S>>],
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        pad_left: usize,
        col: &Tensor<S>,
    ) {
        let xv = self.value(x);
        let wv = self.value(w);
        let (c_in, t) = (xv.rows(), xv.cols());
        let (c_out, k) = (wv.shape()[0], wv.shape()[2]);
        let t_out = g.cols();

        if self.needs(b) {
            let mut db = Tensor::zeros(&[c_out]);
            for o in 0..c_out {
                db.data_mut()[o] = g.row(o).iter().copied().sum();
            }
            self.accum(grads, b, db);
        }
        if self.needs(w) {
            let dw = tensor::matmul(g, col).reshaped(&[c_out, c_in, k]);
            self.accum(grads, w, dw);
        }
        if self.needs(x) {
            // dcol = gᵀ · w2d, then scatter back to input positions.
            let w2d = Tensor::from_vec(&[c_out, c_in * k], wv.data().to_vec());
            let dcol = tensor::matmul_tn(g, &w2d);
            let mut dx = Tensor::zeros(&[c_in, t]);
            for c in 0..c_in {
                let dxrow = dx.row_mut(c);
                for kk in 0..k {
                    let (j0, j1, start) = tap_range(t, t_out, stride, pad_left, kk);
                    for j in j0..j1 {
                        dxrow[start + (j - j0) * stride] += dcol.at2(j, c * k + kk);
                    }
                }
            }
            self.accum(grads, x, dx);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_lstm(
        &self,
        id: usize,
        g: &Tensor<S>,
        grads: &mut [Option<Tensor<S>>],
        x: NodeId,
        wx: NodeId,
        wh: NodeId,
        b: NodeId,
        cache: &LstmCache<S>,
    ) {
        let hidden = &self.nodes[id].value;
        let xv = self.value(x);
        let whv = self.value(wh);
        let (t, h) = (hidden.rows(), hidden.cols());

        // Pre-activation cotangents per step; the dense weight gradients
        // fall out as matrix products afterwards.
        let mut dpre_all = Tensor::zeros(&[t, 4 * h]);
        let mut dh_next = vec![S::ZERO; h];
        let mut dc_next = vec![S::ZERO; h];

        for step in (0..t).rev() {
            let dpre = dpre_all.row_mut(step);
            for j in 0..h {
                let dh = dh_next[j] + g.at2(step, j);
                let i_g = cache.gates.at2(step, j);
                let f_g = cache.gates.at2(step, h + j);
                let g_g = cache.gates.at2(step, 2 * h + j);
                let o_g = cache.gates.at2(step, 3 * h + j);
                let tc = cache.tanh_cells.at2(step, j);
                let c_prev = if step > 0 {
                    cache.cells.at2(step - 1, j)
                } else {
                    S::ZERO
                };

                let dc = dc_next[j] + dh * o_g * (S::ONE - tc * tc);
                let d_i = dc * g_g;
                let d_f = dc * c_prev;
                let d_g = dc * i_g;
                let d_o = dh * tc;

                dpre[j] = d_i * i_g * (S::ONE - i_g);
                dpre[h + j] = d_f * f_g * (S::ONE - f_g);
                dpre[2 * h + j] = d_g * (S::ONE - g_g * g_g);
                dpre[3 * h + j] = d_o * o_g * (S::ONE - o_g);

                dc_next[j] = dc * f_g;
            }

            // dh_{t-1} = Whᵀ dpre.
            for v in dh_next.iter_mut() {
                *v = S::ZERO;
            }
            for (gate, &dp) in dpre.iter().enumerate() {
                let whrow = whv.row(gate);
                for (dst, &wv_) in dh_next.iter_mut().zip(whrow.iter()) {
                    *dst += wv_ * dp;
                }
            }
        }

        if self.needs(wx) {
            self.accum(grads, wx, tensor::matmul_tn(&dpre_all, xv));
        }
        if self.needs(wh) {
            // dWh = Σ_t dpre_t ⊗ h_{t−1}; step 0 has no predecessor.
            let mut dwh = Tensor::zeros(&[4 * h, h]);
            for step in 1..t {
                let dpre = dpre_all.row(step);
                let hprev = hidden.row(step - 1);
                for (gate, &dp) in dpre.iter().enumerate() {
                    let dwhrow = dwh.row_mut(gate);
                    for (dst, &hj) in dwhrow.iter_mut().zip(hprev.iter()) {
                        *dst += dp * hj;
                    }
                }
            }
            self.accum(grads, wh, dwh);
        }
        if self.needs(b) {
            let mut db = Tensor::zeros(&[4 * h]);
            for step in 0..t {
                for (dst, &dp) in db.data_mut().iter_mut().zip(dpre_all.row(step).iter()) {
                    *dst += dp;
                }
            }
            self.accum(grads, b, db);
        }
        if self.needs(x) {
            self.accum(grads, x, tensor::matmul(&dpre_all, self.value(wx)));
        }
    }

    fn backprop_spectral_mask(
        &self,
        g: &Tensor<S>,
        grads: &mut [Option<Tensor<S>>],
        x: NodeId,
        w: NodeId,
        spectrum: &ComplexSpectrum<S>,
        mask: &Tensor<S>,
    ) {
        let (c, t) = (g.rows(), g.cols());
        let f = spectrum.bins;

        // Cotangent of the masked spectrum, channel by channel.
        let mut gre = vec![S::ZERO; c * f];
        let mut gim = vec![S::ZERO; c * f];
        for ch in 0..c {
            let (r, i) = fft::irfft_adjoint(g.row(ch)).expect("spectral_mask adjoint");
            gre[ch * f..(ch + 1) * f].copy_from_slice(&r);
            gim[ch * f..(ch + 1) * f].copy_from_slice(&i);
        }

        if self.needs(w) {
            let mut dw = Tensor::zeros(&[c, f]);
            for idx in 0..c * f {
                let dmask = gre[idx] * spectrum.re[idx] + gim[idx] * spectrum.im[idx];
                let m = mask.data()[idx];
                dw.data_mut()[idx] = dmask * m * (S::ONE - m);
            }
            self.accum(grads, w, dw);
        }
        if self.needs(x) {
            let mut dx = Tensor::zeros(&[c, t]);
            for ch in 0..c {
                let dre: Vec<S> = (0..f).map(|k| gre[ch * f + k] * mask.at2(ch, k)).collect();
                let dim: Vec<S> = (0..f).map(|k| gim[ch * f + k] * mask.at2(ch, k)).collect();
                let row = fft::rfft_adjoint(&dre, &dim, t).expect("spectral_mask adjoint");
                dx.row_mut(ch).copy_from_slice(&row);
            }
            self.accum(grads, x, dx);
        }
    }
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}
