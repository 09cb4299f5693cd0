//! Network building blocks expressed on the autodiff [`Graph`].
//!
//! Every block is a pair of functions: an `init_*` that registers named weights in a
//! [`ParamSet`] and a forward function that binds those names on a graph. Sequences are
//! `T×C` matrices (one row per frame).

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::params::{uniform_fan_in, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

/// Shape of one 1-D convolution layer over a frame sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub activation: Activation,
}

impl ConvSpec {
    pub const fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        activation: Activation,
    ) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            activation,
        }
    }
}

pub fn init_linear<R: Rng>(rng: &mut R, set: &mut ParamSet, prefix: &str, inp: usize, out: usize) {
    set.insert(format!("{prefix}.weight"), uniform_fan_in(rng, inp, out, inp));
    set.insert(format!("{prefix}.bias"), uniform_fan_in(rng, 1, out, inp));
}

pub fn linear(g: &mut Graph, set: &ParamSet, prefix: &str, x: Var) -> Var {
    let w = g.param(set, &format!("{prefix}.weight"));
    let b = g.param(set, &format!("{prefix}.bias"));
    let y = g.matmul(x, w);
    g.add_row(y, b)
}

pub fn init_conv<R: Rng>(rng: &mut R, set: &mut ParamSet, prefix: &str, spec: &ConvSpec) {
    let fan_in = spec.in_channels * spec.kernel;
    set.insert(
        format!("{prefix}.weight"),
        uniform_fan_in(rng, fan_in, spec.out_channels, fan_in),
    );
    set.insert(
        format!("{prefix}.bias"),
        uniform_fan_in(rng, 1, spec.out_channels, fan_in),
    );
}

/// 1-D convolution along the frame axis with zero "same" padding.
///
/// Output frame `i` is centred on input frame `i·stride`, so the output has
/// `ceil(T / stride)` frames. Weights are stored as `(kernel·in)×out`, tap-major.
pub fn conv1d(g: &mut Graph, set: &ParamSet, prefix: &str, spec: &ConvSpec, x: Var) -> Var {
    let (t, c) = g.shape(x);
    assert_eq!(c, spec.in_channels, "conv1d `{prefix}`: channel mismatch");
    let half = (spec.kernel as isize - 1) / 2;
    let centers: Vec<isize> = (0..t).step_by(spec.stride.max(1)).map(|i| i as isize).collect();
    let taps: Vec<Var> = (0..spec.kernel as isize)
        .map(|k| {
            let index = centers
                .iter()
                .map(|&ctr| {
                    let src = ctr + k - half;
                    (0..t as isize).contains(&src).then_some(src as usize)
                })
                .collect();
            g.gather_rows(x, index)
        })
        .collect();
    let stacked = if taps.len() == 1 {
        taps[0]
    } else {
        g.concat_cols(&taps)
    };
    let w = g.param(set, &format!("{prefix}.weight"));
    let b = g.param(set, &format!("{prefix}.bias"));
    let y = g.matmul(stacked, w);
    let y = g.add_row(y, b);
    match spec.activation {
        Activation::Relu => g.relu(y),
        Activation::None => y,
    }
}

/// Repeat each strided frame `stride` times and trim to `t` frames.
pub fn hold_upsample(g: &mut Graph, x: Var, stride: usize, t: usize) -> Var {
    if stride <= 1 {
        return x;
    }
    let index = (0..t).map(|i| Some(i / stride)).collect();
    g.gather_rows(x, index)
}

pub fn init_layer_norm(set: &mut ParamSet, prefix: &str, dim: usize) {
    set.insert(format!("{prefix}.gain"), Array2::ones((1, dim)));
    set.insert(format!("{prefix}.bias"), Array2::zeros((1, dim)));
}

pub fn layer_norm(g: &mut Graph, set: &ParamSet, prefix: &str, x: Var) -> Var {
    let n = g.layer_norm_rows(x, 1e-5);
    let gain = g.param(set, &format!("{prefix}.gain"));
    let bias = g.param(set, &format!("{prefix}.bias"));
    let y = g.mul_row(n, gain);
    g.add_row(y, bias)
}

/// Single-direction LSTM weights: input projection `in×4H`, recurrent `H×4H`, bias `1×4H`.
/// Gate order is `[input, forget, cell, output]`.
pub fn init_lstm<R: Rng>(rng: &mut R, set: &mut ParamSet, prefix: &str, inp: usize, hidden: usize) {
    set.insert(
        format!("{prefix}.w_input"),
        uniform_fan_in(rng, inp, 4 * hidden, hidden),
    );
    set.insert(
        format!("{prefix}.w_hidden"),
        uniform_fan_in(rng, hidden, 4 * hidden, hidden),
    );
    set.insert(
        format!("{prefix}.bias"),
        uniform_fan_in(rng, 1, 4 * hidden, hidden),
    );
}

/// Run one LSTM direction over `x` (`T×in`), returning hidden states `T×H` in input order.
pub fn lstm(g: &mut Graph, set: &ParamSet, prefix: &str, x: Var, hidden: usize, reverse: bool) -> Var {
    let (t, _) = g.shape(x);
    let w_in = g.param(set, &format!("{prefix}.w_input"));
    let w_h = g.param(set, &format!("{prefix}.w_hidden"));
    let bias = g.param(set, &format!("{prefix}.bias"));
    // Input contributions for every frame in one product.
    let xw = g.matmul(x, w_in);
    let xw = g.add_row(xw, bias);
    let mut h = g.constant(Array2::zeros((1, hidden)));
    let mut c = g.constant(Array2::zeros((1, hidden)));
    let mut outputs = vec![h; t];
    let order: Vec<usize> = if reverse {
        (0..t).rev().collect()
    } else {
        (0..t).collect()
    };
    for step in order {
        let pre_x = g.slice_rows(xw, step, 1);
        let pre_h = g.matmul(h, w_h);
        let pre = g.add(pre_x, pre_h);
        let i = g.slice_cols(pre, 0, hidden);
        let f = g.slice_cols(pre, hidden, hidden);
        let cand = g.slice_cols(pre, 2 * hidden, hidden);
        let o = g.slice_cols(pre, 3 * hidden, hidden);
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let cand = g.tanh(cand);
        let o = g.sigmoid(o);
        let keep = g.mul(f, c);
        let write = g.mul(i, cand);
        c = g.add(keep, write);
        let ct = g.tanh(c);
        h = g.mul(o, ct);
        outputs[step] = h;
    }
    g.stack_rows(&outputs)
}

/// Sinusoidal positional encoding, `T×dim`.
pub fn sinusoidal_encoding(t: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((t, dim), |(pos, i)| {
        let pair = (i / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * pair / dim as f64);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

pub fn init_attention<R: Rng>(rng: &mut R, set: &mut ParamSet, prefix: &str, dim: usize) {
    for name in ["query", "key", "value", "out"] {
        init_linear(rng, set, &format!("{prefix}.{name}"), dim, dim);
    }
    init_layer_norm(set, &format!("{prefix}.norm"), dim);
}

/// Single-head scaled dot-product self-attention followed by add & norm.
pub fn attention_block(g: &mut Graph, set: &ParamSet, prefix: &str, x: Var) -> Var {
    let (_, dim) = g.shape(x);
    let q = linear(g, set, &format!("{prefix}.query"), x);
    let k = linear(g, set, &format!("{prefix}.key"), x);
    let v = linear(g, set, &format!("{prefix}.value"), x);
    let kt = g.transpose(k);
    let scores = g.matmul(q, kt);
    let scores = g.scale(scores, 1.0 / (dim as f64).sqrt());
    let weights = g.softmax_rows(scores);
    let mixed = g.matmul(weights, v);
    let projected = linear(g, set, &format!("{prefix}.out"), mixed);
    let residual = g.add(x, projected);
    layer_norm(g, set, &format!("{prefix}.norm"), residual)
}
