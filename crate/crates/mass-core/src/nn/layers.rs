//! Differentiable building blocks: dense projection, pre-norm transformer
//! layer with multi-head self-attention and a GELU MLP, GRU cell, and the
//! fixed sinusoidal positional encoding.

use crate::error::{MassError, Result};
use crate::nn::graph::{Graph, NodeId};
use crate::nn::init;
use crate::nn::store::{Binding, ParamId, ParamStore};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

/// Sinusoidal positional encoding rows for the given absolute positions:
/// even dims `sin(p / 10000^(2i/d))`, odd dims the matching cosine.
pub fn sinusoidal_pe<S: Scalar>(positions: &[usize], d: usize) -> Result<Vec<S>> {
    if !d.is_multiple_of(2) {
        return Err(MassError::InvalidArg(format!("positional encoding width {d} must be even")));
    }
    let mut out = Vec::with_capacity(positions.len() * d);
    for &p in positions {
        let pos = S::from_usize_c(p);
        for i in 0..d / 2 {
            let denom = S::from_f64_c(10000.0).powf(S::from_usize_c(2 * i) / S::from_usize_c(d));
            let arg = pos / denom;
            out.push(arg.sin());
            out.push(arg.cos());
        }
    }
    Ok(out)
}

/// Weight/bias pair of a dense projection.
#[derive(Debug, Clone, Copy)]
pub struct DenseParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl DenseParams {
    pub fn init<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut SplitMix64,
    ) -> Self {
        let w = store.add(format!("{prefix}.w"), d_in, d_out, init::xavier_uniform(rng, d_in, d_out));
        let b = store.add(format!("{prefix}.b"), 1, d_out, init::zeros(d_out));
        Self { w, b }
    }
}

pub fn dense<S: Scalar>(g: &mut Graph<S>, bind: &Binding, p: DenseParams, x: NodeId) -> NodeId {
    let xw = g.matmul(x, bind.node(p.w));
    g.add(xw, bind.node(p.b))
}

/// One pre-norm transformer encoder layer: Q/K/V/O projections, two layer
/// norms, and a `mlp_ratio`-wide GELU MLP.
#[derive(Debug, Clone, Copy)]
pub struct TransformerLayerParams {
    pub ln1_gamma: ParamId,
    pub ln1_beta: ParamId,
    pub wq: DenseParams,
    pub wk: DenseParams,
    pub wv: DenseParams,
    pub wo: DenseParams,
    pub ln2_gamma: ParamId,
    pub ln2_beta: ParamId,
    pub mlp_in: DenseParams,
    pub mlp_out: DenseParams,
    pub heads: usize,
}

impl TransformerLayerParams {
    pub fn init<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        d: usize,
        heads: usize,
        mlp_ratio: usize,
        rng: &mut SplitMix64,
    ) -> Self {
        assert!(heads > 0 && d.is_multiple_of(heads), "width {d} not divisible by {heads} heads");
        let ln1_gamma = store.add(format!("{prefix}.ln1.gamma"), 1, d, init::ones(d));
        let ln1_beta = store.add(format!("{prefix}.ln1.beta"), 1, d, init::zeros(d));
        let wq = DenseParams::init(store, &format!("{prefix}.attn.q"), d, d, rng);
        let wk = DenseParams::init(store, &format!("{prefix}.attn.k"), d, d, rng);
        let wv = DenseParams::init(store, &format!("{prefix}.attn.v"), d, d, rng);
        let wo = DenseParams::init(store, &format!("{prefix}.attn.o"), d, d, rng);
        let ln2_gamma = store.add(format!("{prefix}.ln2.gamma"), 1, d, init::ones(d));
        let ln2_beta = store.add(format!("{prefix}.ln2.beta"), 1, d, init::zeros(d));
        let mlp_in = DenseParams::init(store, &format!("{prefix}.mlp.fc1"), d, d * mlp_ratio, rng);
        let mlp_out = DenseParams::init(store, &format!("{prefix}.mlp.fc2"), d * mlp_ratio, d, rng);
        Self { ln1_gamma, ln1_beta, wq, wk, wv, wo, ln2_gamma, ln2_beta, mlp_in, mlp_out, heads }
    }
}

/// Multi-head self-attention over already-normalized input. Returns the
/// projected context and the per-head attention probability matrices.
pub fn multi_head_attention<S: Scalar>(
    g: &mut Graph<S>,
    bind: &Binding,
    p: &TransformerLayerParams,
    x: NodeId,
) -> (NodeId, Vec<NodeId>) {
    let (_, d) = g.shape(x);
    let dh = d / p.heads;
    let q = dense(g, bind, p.wq, x);
    let k = dense(g, bind, p.wk, x);
    let v = dense(g, bind, p.wv, x);
    let scale = S::one() / S::from_usize_c(dh).sqrt();
    let mut contexts = Vec::with_capacity(p.heads);
    let mut probs = Vec::with_capacity(p.heads);
    for h in 0..p.heads {
        let qh = g.slice_cols(q, h * dh, dh);
        let kh = g.slice_cols(k, h * dh, dh);
        let vh = g.slice_cols(v, h * dh, dh);
        let kt = g.transpose(kh);
        let scores_raw = g.matmul(qh, kt);
        let scores = g.scale(scores_raw, scale);
        let attn = g.softmax_rows(scores);
        probs.push(attn);
        contexts.push(g.matmul(attn, vh));
    }
    let ctx = g.concat_cols(&contexts);
    (dense(g, bind, p.wo, ctx), probs)
}

/// Pre-norm transformer block: `x + Drop(MHA(LN(x)))` then
/// `+ Drop(MLP(LN(.)))`. Dropout applies only when `train` is set.
pub fn transformer_layer<S: Scalar>(
    g: &mut Graph<S>,
    bind: &Binding,
    p: &TransformerLayerParams,
    x: NodeId,
    dropout: f64,
    train: bool,
    rng: &mut SplitMix64,
) -> NodeId {
    let normed = g.layer_norm_rows(x, bind.node(p.ln1_gamma), bind.node(p.ln1_beta));
    let (attn, _) = multi_head_attention(g, bind, p, normed);
    let attn = if train { g.dropout(attn, dropout, rng) } else { attn };
    let h = g.add(x, attn);

    let normed2 = g.layer_norm_rows(h, bind.node(p.ln2_gamma), bind.node(p.ln2_beta));
    let mid = dense(g, bind, p.mlp_in, normed2);
    let act = g.gelu(mid);
    let mlp = dense(g, bind, p.mlp_out, act);
    let mlp = if train { g.dropout(mlp, dropout, rng) } else { mlp };
    g.add(h, mlp)
}

/// GRU cell: update/reset gates plus candidate state.
#[derive(Debug, Clone, Copy)]
pub struct GruCellParams {
    pub wz: ParamId,
    pub uz: ParamId,
    pub bz: ParamId,
    pub wr: ParamId,
    pub ur: ParamId,
    pub br: ParamId,
    pub wh: ParamId,
    pub uh: ParamId,
    pub bh: ParamId,
}

impl GruCellParams {
    pub fn init<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        d_in: usize,
        d_h: usize,
        rng: &mut SplitMix64,
    ) -> Self {
        let gate = |tag: &str, store: &mut ParamStore<S>, rng: &mut SplitMix64| {
            (
                store.add(format!("{prefix}.w{tag}"), d_in, d_h, init::xavier_uniform(rng, d_in, d_h)),
                store.add(format!("{prefix}.u{tag}"), d_h, d_h, init::xavier_uniform(rng, d_h, d_h)),
                store.add(format!("{prefix}.b{tag}"), 1, d_h, init::zeros(d_h)),
            )
        };
        let (wz, uz, bz) = gate("z", store, rng);
        let (wr, ur, br) = gate("r", store, rng);
        let (wh, uh, bh) = gate("h", store, rng);
        Self { wz, uz, bz, wr, ur, br, wh, uh, bh }
    }
}

/// One GRU update:
/// `z = sig(xWz + hUz + bz)`, `r = sig(xWr + hUr + br)`,
/// `c = tanh(xWh + (r*h)Uh + bh)`, `h' = (1-z)*h + z*c`.
pub fn gru_step<S: Scalar>(
    g: &mut Graph<S>,
    bind: &Binding,
    p: &GruCellParams,
    h_prev: NodeId,
    x: NodeId,
) -> NodeId {
    let gate = |g: &mut Graph<S>, w: ParamId, u: ParamId, b: ParamId, h: NodeId| {
        let xw = g.matmul(x, bind.node(w));
        let hu = g.matmul(h, bind.node(u));
        let s = g.add(xw, hu);
        g.add(s, bind.node(b))
    };
    let z = {
        let pre = gate(g, p.wz, p.uz, p.bz, h_prev);
        g.sigmoid(pre)
    };
    let r = {
        let pre = gate(g, p.wr, p.ur, p.br, h_prev);
        g.sigmoid(pre)
    };
    let cand = {
        let rh = g.mul(r, h_prev);
        let xw = g.matmul(x, bind.node(p.wh));
        let hu = g.matmul(rh, bind.node(p.uh));
        let s = g.add(xw, hu);
        let pre = g.add(s, bind.node(p.bh));
        g.tanh(pre)
    };
    // (1-z)*h + z*c == h + z*(c - h)
    let delta = g.sub(cand, h_prev);
    let step = g.mul(z, delta);
    g.add(h_prev, step)
}

/// Run a GRU over all rows of `seq`, returning stacked hidden states.
pub fn gru_sequence<S: Scalar>(
    g: &mut Graph<S>,
    bind: &Binding,
    p: &GruCellParams,
    seq: NodeId,
    d_h: usize,
) -> NodeId {
    let (e, _) = g.shape(seq);
    let mut h = g.zeros(1, d_h);
    let mut states = Vec::with_capacity(e);
    for t in 0..e {
        let x = g.slice_rows(seq, t, 1);
        h = gru_step(g, bind, p, h, x);
        states.push(h);
    }
    g.concat_rows(&states)
}

/// Bidirectional GRU layer: forward states concatenated with backward
/// states per timestep, `[e, d_in] -> [e, 2*d_h]`.
pub fn bi_gru_layer<S: Scalar>(
    g: &mut Graph<S>,
    bind: &Binding,
    fwd: &GruCellParams,
    bwd: &GruCellParams,
    seq: NodeId,
    d_h: usize,
) -> NodeId {
    let forward = gru_sequence(g, bind, fwd, seq, d_h);
    let reversed = g.reverse_rows(seq);
    let backward_rev = gru_sequence(g, bind, bwd, reversed, d_h);
    let backward = g.reverse_rows(backward_rev);
    g.concat_cols(&[forward, backward])
}
