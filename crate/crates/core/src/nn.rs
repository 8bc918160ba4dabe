//! Building blocks shared by the encoders, the predictive network and the head.
//!
//! Sequences for a whole batch are stored stacked: a batch of `n` sequences of
//! length `L` and width `d` is one `[n*L, d]` node, rows ordered sample-major.
//! Per-token layers act on the stack directly; sequence-aware layers take the
//! per-sample length explicitly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::params::{glorot, uniform, ParamGroup, ParamId, ParamStore};
use crate::tensor::Matrix;

/// Everything a layer needs to register its parameters.
pub struct Init<'a, R: Rng> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut R,
    pub group: ParamGroup,
}

impl<R: Rng> Init<'_, R> {
    fn add(&mut self, name: String, value: Matrix) -> ParamId {
        self.store.add(name, self.group, value)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Gelu,
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Gelu => tape.gelu(x),
            Activation::Identity => x,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(init: &mut Init<'_, R>, name: &str, in_dim: usize, out_dim: usize) -> Self {
        let w = glorot(init.rng, in_dim, out_dim);
        let weight = init.add(format!("{name}.weight"), w);
        let bias = init.add(format!("{name}.bias"), Matrix::zeros(1, out_dim));
        Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let y = tape.matmul(x, w);
        tape.add_row(y, b)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new<R: Rng>(init: &mut Init<'_, R>, name: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: init.add(format!("{name}.gamma"), Matrix::filled(1, dim, 1.0)),
            beta: init.add(format!("{name}.beta"), Matrix::zeros(1, dim)),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let n = tape.layer_norm(x, 1e-5);
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        let s = tape.mul_row(n, g);
        tape.add_row(s, b)
    }
}

/// Two affine layers with an activation in between.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub first: Linear,
    pub second: Linear,
    pub activation: Activation,
}

impl Mlp {
    pub fn new<R: Rng>(
        init: &mut Init<'_, R>,
        name: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        activation: Activation,
    ) -> Self {
        Mlp {
            first: Linear::new(init, &format!("{name}.0"), in_dim, hidden),
            second: Linear::new(init, &format!("{name}.1"), hidden, out_dim),
            activation,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let h = self.first.forward(tape, store, x);
        let h = self.activation.apply(tape, h);
        self.second.forward(tape, store, h)
    }
}

/// Post-norm Transformer encoder layer: attention then position-wise feed-forward,
/// each with a residual connection and layer normalisation.
#[derive(Clone, Debug)]
pub struct TransformerLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub norm1: LayerNorm,
    pub ff: Mlp,
    pub norm2: LayerNorm,
    pub heads: usize,
}

impl TransformerLayer {
    pub fn new<R: Rng>(init: &mut Init<'_, R>, name: &str, dim: usize, heads: usize, ff_dim: usize) -> Self {
        TransformerLayer {
            query: Linear::new(init, &format!("{name}.attn.q"), dim, dim),
            key: Linear::new(init, &format!("{name}.attn.k"), dim, dim),
            value: Linear::new(init, &format!("{name}.attn.v"), dim, dim),
            output: Linear::new(init, &format!("{name}.attn.o"), dim, dim),
            norm1: LayerNorm::new(init, &format!("{name}.norm1"), dim),
            ff: Mlp::new(init, &format!("{name}.ff"), dim, ff_dim, dim, Activation::Gelu),
            norm2: LayerNorm::new(init, &format!("{name}.norm2"), dim),
            heads,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, seq_len: usize) -> Var {
        let q = self.query.forward(tape, store, x);
        let k = self.key.forward(tape, store, x);
        let v = self.value.forward(tape, store, x);
        let a = tape.block_attention(q, k, v, seq_len, self.heads);
        let a = self.output.forward(tape, store, a);
        let r = tape.add(x, a);
        let h = self.norm1.forward(tape, store, r);
        let f = self.ff.forward(tape, store, h);
        let r2 = tape.add(h, f);
        self.norm2.forward(tape, store, r2)
    }
}

#[derive(Clone, Debug)]
pub struct TransformerEncoder {
    pub layers: Vec<TransformerLayer>,
    pub dim: usize,
}

impl TransformerEncoder {
    pub fn new<R: Rng>(
        init: &mut Init<'_, R>,
        name: &str,
        dim: usize,
        layers: usize,
        heads: usize,
        ff_dim: usize,
    ) -> Self {
        TransformerEncoder {
            layers: (0..layers)
                .map(|i| TransformerLayer::new(init, &format!("{name}.layer{i}"), dim, heads, ff_dim))
                .collect(),
            dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, seq_len: usize) -> Var {
        self.layers
            .iter()
            .fold(x, |h, layer| layer.forward(tape, store, h, seq_len))
    }
}

/// Sinusoidal position table, `[len, dim]`.
pub fn sinusoidal_positions(len: usize, dim: usize) -> Matrix {
    Matrix::from_fn(len, dim, |pos, i| {
        let pair = (i / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * pair / dim as f64);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Single-layer LSTM (gate order: input, forget, cell, output).
#[derive(Clone, Debug)]
pub struct Lstm {
    pub input_weight: ParamId,
    pub hidden_weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<R: Rng>(init: &mut Init<'_, R>, name: &str, input_dim: usize, hidden: usize) -> Self {
        let limit = 1.0 / (hidden as f64).sqrt();
        let wx = uniform(init.rng, input_dim, 4 * hidden, limit);
        let wh = uniform(init.rng, hidden, 4 * hidden, limit);
        Lstm {
            input_weight: init.add(format!("{name}.w_ih"), wx),
            hidden_weight: init.add(format!("{name}.w_hh"), wh),
            bias: init.add(format!("{name}.bias"), Matrix::zeros(1, 4 * hidden)),
            input_dim,
            hidden,
        }
    }

    /// Runs over `[n*seq_len, d]` and returns the hidden state after every step,
    /// in processing order. Each returned node is `[n, hidden]`.
    pub fn run(&self, tape: &mut Tape, store: &ParamStore, x: Var, seq_len: usize, reverse: bool) -> Vec<Var> {
        let n = tape.shape(x).0 / seq_len;
        let wx = tape.param(store, self.input_weight);
        let wh = tape.param(store, self.hidden_weight);
        let b = tape.param(store, self.bias);
        let hd = self.hidden;
        // Project every token at once, then pick rows per step.
        let xw = tape.matmul(x, wx);
        let xw = tape.add_row(xw, b);
        let mut h = tape.constant(Matrix::zeros(n, hd));
        let mut c = tape.constant(Matrix::zeros(n, hd));
        let mut states = Vec::with_capacity(seq_len);
        for step in 0..seq_len {
            let t = if reverse { seq_len - 1 - step } else { step };
            let rows: Vec<usize> = (0..n).map(|s| s * seq_len + t).collect();
            let xt = tape.gather_rows(xw, &rows);
            let hw = tape.matmul(h, wh);
            let gates = tape.add(xt, hw);
            let i = tape.slice_cols(gates, 0, hd);
            let i = tape.sigmoid(i);
            let f = tape.slice_cols(gates, hd, hd);
            let f = tape.sigmoid(f);
            let g = tape.slice_cols(gates, 2 * hd, hd);
            let g = tape.tanh(g);
            let o = tape.slice_cols(gates, 3 * hd, hd);
            let o = tape.sigmoid(o);
            let fc = tape.mul(f, c);
            let ig = tape.mul(i, g);
            c = tape.add(fc, ig);
            let ct = tape.tanh(c);
            h = tape.mul(o, ct);
            states.push(h);
        }
        states
    }

    /// Final hidden state, `[n, hidden]`.
    pub fn last_hidden(&self, tape: &mut Tape, store: &ParamStore, x: Var, seq_len: usize) -> Var {
        *self
            .run(tape, store, x, seq_len, false)
            .last()
            .expect("seq_len >= 1")
    }
}

/// Re-stacks per-step `[n, h]` states (in time order) into `[n*L, h]`, sample-major.
pub fn stack_time_major(tape: &mut Tape, states: &[Var]) -> Var {
    let l = states.len();
    let n = tape.shape(states[0]).0;
    let tm = tape.concat_rows(states);
    let rows: Vec<usize> = (0..n * l).map(|r| (r % l) * n + r / l).collect();
    tape.gather_rows(tm, &rows)
}

/// Bi-directional LSTM: forward and backward hidden states concatenated per token.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

impl BiLstm {
    pub fn new<R: Rng>(init: &mut Init<'_, R>, name: &str, input_dim: usize, hidden: usize) -> Self {
        BiLstm {
            forward: Lstm::new(init, &format!("{name}.fwd"), input_dim, hidden),
            backward: Lstm::new(init, &format!("{name}.bwd"), input_dim, hidden),
        }
    }

    pub fn out_dim(&self) -> usize {
        2 * self.forward.hidden
    }

    /// `[n*L, d] -> [n*L, 2*hidden]`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, seq_len: usize) -> Var {
        let fwd = self.forward.run(tape, store, x, seq_len, false);
        let mut bwd = self.backward.run(tape, store, x, seq_len, true);
        bwd.reverse();
        let f = stack_time_major(tape, &fwd);
        let b = stack_time_major(tape, &bwd);
        tape.concat_cols(&[f, b])
    }
}

/// Output length of a "same"-padded strided convolution.
pub fn conv_out_len(len: usize, stride: usize) -> usize {
    len.div_ceil(stride)
}

/// 1-D convolution over time with "same"-style padding: `L -> ceil(L/stride)`.
#[derive(Clone, Debug)]
pub struct Conv1d {
    /// `[kernel*in_ch, out_ch]`, row index = tap * in_ch + channel.
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv1d {
    pub fn new<R: Rng>(
        init: &mut Init<'_, R>,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        let w = glorot(init.rng, kernel * in_ch, out_ch);
        Conv1d {
            weight: init.add(format!("{name}.weight"), w),
            bias: init.add(format!("{name}.bias"), Matrix::zeros(1, out_ch)),
            in_ch,
            out_ch,
            kernel,
            stride,
        }
    }

    /// Im2col index map for a batch of `n` sequences of length `len`.
    fn im2col_index(&self, n: usize, len: usize) -> (usize, Vec<Option<u32>>) {
        let out_len = conv_out_len(len, self.stride);
        let needed = (out_len - 1) * self.stride + self.kernel;
        let pad_total = needed.saturating_sub(len);
        let pad_left = pad_total / 2;
        let cols = self.kernel * self.in_ch;
        let mut index = Vec::with_capacity(n * out_len * cols);
        for s in 0..n {
            for t in 0..out_len {
                for tap in 0..self.kernel {
                    let pos = (t * self.stride + tap) as isize - pad_left as isize;
                    for ch in 0..self.in_ch {
                        index.push(if pos >= 0 && (pos as usize) < len {
                            Some(((s * len + pos as usize) * self.in_ch + ch) as u32)
                        } else {
                            None
                        });
                    }
                }
            }
        }
        (out_len, index)
    }

    /// `[n*len, in_ch] -> ([n*out_len, out_ch], out_len)`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, len: usize) -> (Var, usize) {
        let n = tape.shape(x).0 / len;
        let (out_len, index) = self.im2col_index(n, len);
        let cols = tape.gather(x, n * out_len, self.kernel * self.in_ch, index);
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let y = tape.matmul(cols, w);
        (tape.add_row(y, b), out_len)
    }
}
