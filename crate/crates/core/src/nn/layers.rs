//! Parameter bundles and their forward passes.
//!
//! Each layer registers its tensors once in a [`ParameterStore`]; `bind`
//! puts them on a tape so repeated applications within one forward pass
//! share a single copy (and accumulate one gradient).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::tape::{Index, Tape, Var};
use super::{NnError, ParamId, ParameterStore, Tensor};

/// Linear -> ReLU -> Linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mlp2 {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct Mlp2Vars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl Mlp2 {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            w1: store.add(format!("{prefix}.w1"), Tensor::glorot(input, hidden, input, hidden, rng)),
            b1: store.add(format!("{prefix}.b1"), Tensor::zeros(1, hidden)),
            w2: store.add(format!("{prefix}.w2"), Tensor::glorot(hidden, output, hidden, output, rng)),
            b2: store.add(format!("{prefix}.b2"), Tensor::zeros(1, output)),
        }
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParameterStore) -> Mlp2Vars {
        Mlp2Vars {
            w1: tape.param(store, self.w1),
            b1: tape.param(store, self.b1),
            w2: tape.param(store, self.w2),
            b2: tape.param(store, self.b2),
        }
    }
}

pub fn mlp2(tape: &mut Tape, x: Var, p: &Mlp2Vars) -> Result<Var, NnError> {
    let h = tape.linear(x, p.w1, Some(p.b1))?;
    let h = tape.relu(h);
    tape.linear(h, p.w2, Some(p.b2))
}

/// [`Mlp2`] applied to `[h_src[src[e]]; h_dst[dst[e]]]` for every edge `e`.
///
/// The first layer is split into a source and a destination block, so the
/// node-level products are computed once and gathered per edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeMlp {
    pub w1_src: ParamId,
    pub w1_dst: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct EdgeMlpVars {
    pub w1_src: Var,
    pub w1_dst: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl EdgeMlp {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        src_dim: usize,
        dst_dim: usize,
        hidden: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = src_dim + dst_dim;
        Self {
            w1_src: store.add(format!("{prefix}.w1_src"), Tensor::glorot(src_dim, hidden, fan_in, hidden, rng)),
            w1_dst: store.add(format!("{prefix}.w1_dst"), Tensor::glorot(dst_dim, hidden, fan_in, hidden, rng)),
            b1: store.add(format!("{prefix}.b1"), Tensor::zeros(1, hidden)),
            w2: store.add(format!("{prefix}.w2"), Tensor::glorot(hidden, output, hidden, output, rng)),
            b2: store.add(format!("{prefix}.b2"), Tensor::zeros(1, output)),
        }
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParameterStore) -> EdgeMlpVars {
        EdgeMlpVars {
            w1_src: tape.param(store, self.w1_src),
            w1_dst: tape.param(store, self.w1_dst),
            b1: tape.param(store, self.b1),
            w2: tape.param(store, self.w2),
            b2: tape.param(store, self.b2),
        }
    }
}

impl EdgeMlpVars {
    pub fn forward(
        &self,
        tape: &mut Tape,
        h_src: Var,
        src: Index,
        h_dst: Var,
        dst: Index,
    ) -> Result<Var, NnError> {
        let ps = tape.matmul(h_src, self.w1_src)?;
        let pd = tape.matmul(h_dst, self.w1_dst)?;
        let pre = tape.gather_add(ps, src, pd, dst, Some(self.b1))?;
        let h = tape.relu(pre);
        tape.linear(h, self.w2, Some(self.b2))
    }
}

/// Gated recurrent unit.
///
/// `r = σ(x W_r + h U_r + b_r)`, `z = σ(x W_z + h U_z + b_z)`,
/// `n = tanh(x W_n + (r ⊙ h) U_n + b_n)`, `h' = (1 - z) ⊙ h + z ⊙ n`.
/// `wx` stacks `[W_r W_z W_n]`, `wh` stacks `[U_r U_z]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gru {
    pub wx: ParamId,
    pub wh: ParamId,
    pub wn: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub wx: Var,
    pub wh: Var,
    pub wn: Var,
    pub b: Var,
    pub hidden: usize,
}

impl Gru {
    pub fn new<R: Rng + ?Sized>(store: &mut ParameterStore, prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let fan_in = input + hidden;
        Self {
            wx: store.add(format!("{prefix}.wx"), Tensor::glorot(input, 3 * hidden, fan_in, hidden, rng)),
            wh: store.add(format!("{prefix}.wh"), Tensor::glorot(hidden, 2 * hidden, fan_in, hidden, rng)),
            wn: store.add(format!("{prefix}.wn"), Tensor::glorot(hidden, hidden, fan_in, hidden, rng)),
            b: store.add(format!("{prefix}.b"), Tensor::zeros(1, 3 * hidden)),
            hidden,
        }
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParameterStore) -> GruVars {
        GruVars {
            wx: tape.param(store, self.wx),
            wh: tape.param(store, self.wh),
            wn: tape.param(store, self.wn),
            b: tape.param(store, self.b),
            hidden: self.hidden,
        }
    }
}

/// One GRU step for every row of `x` (inputs) and `h` (states).
pub fn gru_cell(tape: &mut Tape, x: Var, h: Var, p: &GruVars) -> Result<Var, NnError> {
    let s = p.hidden;
    let gx = tape.linear(x, p.wx, Some(p.b))?;
    let gh = tape.matmul(h, p.wh)?;
    let gx_rz = tape.slice_cols(gx, 0, 2 * s)?;
    let gx_n = tape.slice_cols(gx, 2 * s, s)?;
    let pre_rz = tape.add(gx_rz, gh)?;
    let rz = tape.sigmoid(pre_rz);
    let r = tape.slice_cols(rz, 0, s)?;
    let z = tape.slice_cols(rz, s, s)?;
    let rh = tape.mul(r, h)?;
    let rh_n = tape.matmul(rh, p.wn)?;
    let pre_n = tape.add(gx_n, rh_n)?;
    let n = tape.tanh(pre_n);
    let diff = tape.sub(n, h)?;
    let step = tape.mul(z, diff)?;
    tape.add(h, step)
}

/// Scaled dot-product attention over incoming messages.
///
/// For destination `j` with embedding `h_j` and messages `m_i`:
/// `α_i = softmax_i(<h_j W_q, m_i W_k> / sqrt(u))`, output `Σ_i α_i m_i W_v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attention {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub msg_dim: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub msg_dim: usize,
}

impl Attention {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        dest_dim: usize,
        msg_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            wq: store.add(format!("{prefix}.wq"), Tensor::glorot(dest_dim, msg_dim, dest_dim, msg_dim, rng)),
            wk: store.add(format!("{prefix}.wk"), Tensor::glorot(msg_dim, msg_dim, msg_dim, msg_dim, rng)),
            wv: store.add(format!("{prefix}.wv"), Tensor::glorot(msg_dim, out_dim, msg_dim, out_dim, rng)),
            msg_dim,
        }
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParameterStore) -> AttentionVars {
        AttentionVars {
            wq: tape.param(store, self.wq),
            wk: tape.param(store, self.wk),
            wv: tape.param(store, self.wv),
            msg_dim: self.msg_dim,
        }
    }
}

/// Attention over a batch of destinations.
///
/// `messages` has one row per edge; `dst[e]` is the destination row of
/// `dest` that edge `e` points into. Destinations with no edges get zero.
/// Returns `(output, weights)` with weights as an `E x 1` column.
pub fn attention_aggregate(
    tape: &mut Tape,
    dest: Var,
    messages: Var,
    dst: Index,
    p: &AttentionVars,
) -> Result<(Var, Var), NnError> {
    let n = tape.value(dest).rows();
    let q = tape.matmul(dest, p.wq)?;
    // <q, m W_k> = <q W_kᵀ, m>, which avoids transforming every message.
    let qk = tape.matmul_bt(q, p.wk)?;
    let raw = tape.gather_rowdot(qk, dst.clone(), messages)?;
    let scores = tape.scale(raw, 1.0 / libm::sqrt(p.msg_dim as f64));
    let alpha = tape.segment_softmax(scores, dst.clone(), n)?;
    let agg = tape.weighted_scatter(messages, alpha, dst, n)?;
    Ok((tape.matmul(agg, p.wv)?, alpha))
}

/// Attention for a single destination, messages given as rows.
pub fn attention_single(
    tape: &mut Tape,
    dest: Var,
    messages: &[Var],
    p: &AttentionVars,
) -> Result<Var, NnError> {
    if messages.is_empty() {
        let out = tape.value(p.wv).cols();
        return Ok(tape.constant(Tensor::zeros(1, out)));
    }
    let cols = tape.value(messages[0]).cols();
    for &m in messages {
        if tape.value(m).shape() != (1, cols) {
            return Err(NnError::ShapeMismatch {
                op: "attention_single",
                left: (1, cols),
                right: tape.value(m).shape(),
            });
        }
    }
    // Stack through a scatter so gradients flow back to each message.
    let mut rows = Vec::with_capacity(messages.len());
    for (i, &m) in messages.iter().enumerate() {
        let placed = tape.scatter_add_rows(m, vec![i].into(), messages.len())?;
        rows.push(placed);
    }
    let mut all = rows[0];
    for &r in &rows[1..] {
        all = tape.add(all, r)?;
    }
    let zeros: Index = vec![0; messages.len()].into();
    let (out, _) = attention_aggregate(tape, dest, all, zeros, p)?;
    Ok(out)
}

/// Edge messages from an [`EdgeMlp`] pooled by [`attention_aggregate`],
/// computed without materializing the messages.
///
/// With `r_e` the hidden activation of edge `e` and `m_e = r_e W2 + b2`:
/// `<q_j W_k, m_e> = <h_j A, r_e> + h_j c` where `A = W_q W_kᵀ W2ᵀ` and
/// `c = W_q W_kᵀ b2ᵀ`, and `Σ α_e m_e W_v = (Σ α_e r_e)(W2 W_v) + b2 W_v`
/// for destinations with at least one edge. Only node-sized products remain.
pub fn message_attention(
    tape: &mut Tape,
    h_src: Var,
    src: Index,
    h_dst: Var,
    dst: Index,
    msg: &EdgeMlpVars,
    attn: &AttentionVars,
) -> Result<Var, NnError> {
    let n = tape.value(h_dst).rows();
    let ps = tape.matmul(h_src, msg.w1_src)?;
    let pd = tape.matmul(h_dst, msg.w1_dst)?;
    let pre = tape.gather_add(ps, src, pd, dst.clone(), Some(msg.b1))?;
    let r = tape.relu(pre);

    let qk = tape.matmul_bt(attn.wq, attn.wk)?;
    let a = tape.matmul_bt(qk, msg.w2)?;
    let c = tape.matmul_bt(qk, msg.b2)?;
    let qa = tape.matmul(h_dst, a)?;
    let qc = tape.matmul(h_dst, c)?;
    let dots = tape.gather_rowdot(qa, dst.clone(), r)?;
    let offsets = tape.gather_rows(qc, dst.clone())?;
    let raw = tape.add(dots, offsets)?;
    let scores = tape.scale(raw, 1.0 / libm::sqrt(attn.msg_dim as f64));
    let alpha = tape.segment_softmax(scores, dst.clone(), n)?;
    let pooled = tape.weighted_scatter(r, alpha, dst.clone(), n)?;

    let value = tape.matmul(msg.w2, attn.wv)?;
    let bias = tape.matmul(msg.b2, attn.wv)?;
    let mut occupied = Tensor::zeros(n, 1);
    for &j in dst.iter() {
        occupied.set(j, 0, 1.0);
    }
    let occupied = tape.constant(occupied);
    let bias = tape.matmul(occupied, bias)?;
    let out = tape.matmul(pooled, value)?;
    tape.add(out, bias)
}
