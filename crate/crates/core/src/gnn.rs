//! Graph neural network decoder on the Tanner graph.
//!
//! Variable nodes start from an affine embedding of their binary index,
//! check nodes from an affine embedding of their syndrome bit. Each round
//! first updates checks from incoming variable messages, then variables from
//! the updated checks. Messages come from a two-layer MLP on the concatenated
//! endpoint embeddings, are pooled with dot-product attention keyed by the
//! receiving node and fold into the node state through a GRU. A two-layer
//! readout gives one logit per variable.

use alloc::format;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{ChannelError, Dataset, ErrorVector, Syndrome};
use crate::codes::CssCode;
use crate::gf2::BinVector;
use crate::nn::{
    fit, gru_cell, message_attention, mlp2, AdamConfig, Attention, EdgeMlp, EpochReport, FitConfig, GradClip, Gru,
    Index, Mlp2, NnError, ParamId, ParameterStore, Tape, Tensor, Trainable, Var,
};
use crate::tanner::TannerGraph;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GnnError {
    #[error("model built for {expected_vars} variables / {expected_checks} checks, got {vars} / {checks}")]
    GraphMismatch {
        expected_vars: usize,
        expected_checks: usize,
        vars: usize,
        checks: usize,
    },
    #[error("syndrome has {got} bits, expected {expected}")]
    SyndromeLength { expected: usize, got: usize },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(&'static str),
    #[error("missing parameter {0}")]
    MissingParameter(alloc::string::String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnnHyperparams {
    /// Message-passing rounds.
    pub layers: usize,
    /// Node embedding width.
    pub embed: usize,
    /// Message width.
    pub message: usize,
    /// Hidden width of the message and readout MLPs.
    pub hidden: usize,
    /// One parameter set per round instead of one shared set.
    pub untied: bool,
    /// Variables read the check states from before the round's update.
    pub simultaneous: bool,
    pub lr: f64,
    pub batch_size: usize,
    pub clip: GradClip,
    pub epochs: usize,
    /// Stop after this many epochs without `plateau_tol` improvement.
    pub plateau_patience: Option<usize>,
    pub plateau_tol: f64,
    /// Graphs per forward/backward pass inside a minibatch; bounds memory.
    pub chunk: usize,
    pub seed: u64,
}

impl Default for GnnHyperparams {
    fn default() -> Self {
        Self {
            layers: 6,
            embed: 128,
            message: 128,
            hidden: 128,
            untied: false,
            simultaneous: false,
            lr: 4e-4,
            batch_size: 32,
            clip: GradClip::GlobalNorm(0.5),
            epochs: 200,
            plateau_patience: Some(10),
            plateau_tol: 1e-4,
            chunk: 4,
            seed: 0,
        }
    }
}

impl GnnHyperparams {
    pub fn validate(&self) -> Result<(), GnnError> {
        if self.layers == 0 {
            return Err(GnnError::Hyperparams("layers must be at least 1"));
        }
        if self.embed == 0 || self.message == 0 || self.hidden == 0 {
            return Err(GnnError::Hyperparams("widths must be at least 1"));
        }
        if self.batch_size == 0 || self.chunk == 0 {
            return Err(GnnError::Hyperparams("batch and chunk sizes must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(GnnError::Hyperparams("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Parameters for aggregating into one node type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TypedLayer {
    pub message: EdgeMlp,
    pub attention: Attention,
    pub update: Gru,
}

impl TypedLayer {
    fn new(store: &mut ParameterStore, prefix: &str, hp: &GnnHyperparams, rng: &mut ChaCha8Rng) -> Self {
        let (s, u) = (hp.embed, hp.message);
        Self {
            message: EdgeMlp::new(store, &format!("{prefix}.msg"), s, s, hp.hidden, u, rng),
            attention: Attention::new(store, &format!("{prefix}.attn"), s, u, u, rng),
            update: Gru::new(store, &format!("{prefix}.gru"), u, s, rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundParams {
    /// Aggregation into check nodes.
    pub layer_c: TypedLayer,
    /// Aggregation into variable nodes.
    pub layer_v: TypedLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    pub hp: GnnHyperparams,
    pub var_count: usize,
    pub check_count: usize,
    pub store: ParameterStore,
    var_enc: (ParamId, ParamId),
    chk_enc: (ParamId, ParamId),
    rounds: Vec<RoundParams>,
    readout: Mlp2,
}

/// LSB-first index width for `count` nodes: `ceil(log2(count))`, at least 1.
pub fn index_bits(count: usize) -> usize {
    if count <= 2 {
        1
    } else {
        (usize::BITS - (count - 1).leading_zeros()) as usize
    }
}

impl GnnModel {
    /// Glorot-initialized model whose readout output layer is zero, so every
    /// initial probability is exactly 1/2.
    pub fn new(var_count: usize, check_count: usize, hp: GnnHyperparams) -> Result<Self, GnnError> {
        hp.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        let mut store = ParameterStore::new();
        let (s, bits) = (hp.embed, index_bits(var_count));
        // Fan-in scaling keeps the one-bit syndrome feature from being
        // drowned out at wide embeddings.
        store.add("var_enc.w", Tensor::glorot(bits, s, bits, bits, &mut rng));
        store.add("var_enc.b", Tensor::zeros(1, s));
        store.add("chk_enc.w", Tensor::glorot(1, s, 1, 1, &mut rng));
        store.add("chk_enc.b", Tensor::zeros(1, s));
        let sets = if hp.untied { hp.layers } else { 1 };
        for k in 0..sets {
            let prefix = if hp.untied { format!("round{k}.") } else { alloc::string::String::new() };
            TypedLayer::new(&mut store, &format!("{prefix}layer_c"), &hp, &mut rng);
            TypedLayer::new(&mut store, &format!("{prefix}layer_v"), &hp, &mut rng);
        }
        let readout = Mlp2::new(&mut store, "readout", s, hp.hidden, 1, &mut rng);
        store.value_mut(readout.w2).fill(0.0);
        Self::from_store(var_count, check_count, hp, store)
    }

    /// Rebinds a parameter store, e.g. one read from a checkpoint.
    pub fn from_store(
        var_count: usize,
        check_count: usize,
        hp: GnnHyperparams,
        store: ParameterStore,
    ) -> Result<Self, GnnError> {
        hp.validate()?;
        let (s, u, hid, bits) = (hp.embed, hp.message, hp.hidden, index_bits(var_count));
        let get = |name: &str, shape: (usize, usize)| -> Result<ParamId, GnnError> {
            let id = store.id(name).ok_or_else(|| GnnError::MissingParameter(name.into()))?;
            if store.value(id).shape() != shape {
                return Err(NnError::ShapeMismatch {
                    op: "gnn parameter",
                    left: shape,
                    right: store.value(id).shape(),
                }
                .into());
            }
            Ok(id)
        };
        let typed = |prefix: &str| -> Result<TypedLayer, GnnError> {
            Ok(TypedLayer {
                message: EdgeMlp {
                    w1_src: get(&format!("{prefix}.msg.w1_src"), (s, hid))?,
                    w1_dst: get(&format!("{prefix}.msg.w1_dst"), (s, hid))?,
                    b1: get(&format!("{prefix}.msg.b1"), (1, hid))?,
                    w2: get(&format!("{prefix}.msg.w2"), (hid, u))?,
                    b2: get(&format!("{prefix}.msg.b2"), (1, u))?,
                },
                attention: Attention {
                    wq: get(&format!("{prefix}.attn.wq"), (s, u))?,
                    wk: get(&format!("{prefix}.attn.wk"), (u, u))?,
                    wv: get(&format!("{prefix}.attn.wv"), (u, u))?,
                    msg_dim: u,
                },
                update: Gru {
                    wx: get(&format!("{prefix}.gru.wx"), (u, 3 * s))?,
                    wh: get(&format!("{prefix}.gru.wh"), (s, 2 * s))?,
                    wn: get(&format!("{prefix}.gru.wn"), (s, s))?,
                    b: get(&format!("{prefix}.gru.b"), (1, 3 * s))?,
                    hidden: s,
                },
            })
        };
        let sets = if hp.untied { hp.layers } else { 1 };
        let mut rounds = Vec::with_capacity(sets);
        for k in 0..sets {
            let prefix = if hp.untied { format!("round{k}.") } else { alloc::string::String::new() };
            rounds.push(RoundParams {
                layer_c: typed(&format!("{prefix}layer_c"))?,
                layer_v: typed(&format!("{prefix}layer_v"))?,
            });
        }
        let readout = Mlp2 {
            w1: get("readout.w1", (s, hid))?,
            b1: get("readout.b1", (1, hid))?,
            w2: get("readout.w2", (hid, 1))?,
            b2: get("readout.b2", (1, 1))?,
        };
        Ok(Self {
            var_enc: (get("var_enc.w", (bits, s))?, get("var_enc.b", (1, s))?),
            chk_enc: (get("chk_enc.w", (1, s))?, get("chk_enc.b", (1, s))?),
            hp,
            var_count,
            check_count,
            store,
            rounds,
            readout,
        })
    }

    pub fn for_code(code: &CssCode, hp: GnnHyperparams) -> Result<Self, GnnError> {
        Self::new(2 * code.n, code.m(), hp)
    }

    pub fn readout(&self) -> Mlp2 {
        self.readout
    }

    pub fn rounds(&self) -> &[RoundParams] {
        &self.rounds
    }

    fn check_graph(&self, graph: &TannerGraph) -> Result<(), GnnError> {
        if graph.var_count != self.var_count || graph.check_count != self.check_count {
            return Err(GnnError::GraphMismatch {
                expected_vars: self.var_count,
                expected_checks: self.check_count,
                vars: graph.var_count,
                checks: graph.check_count,
            });
        }
        Ok(())
    }
}

/// Disjoint union of copies of one Tanner graph, one per syndrome.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub graphs: usize,
    pub var_rows: usize,
    pub check_rows: usize,
    pub edge_var: Index,
    pub edge_check: Index,
    var_features: Tensor,
    check_features: Tensor,
}

impl GraphBatch {
    pub fn new(graph: &TannerGraph, syndromes: &[&Syndrome]) -> Result<Self, GnnError> {
        let (v, c, e) = (graph.var_count, graph.check_count, graph.edge_count());
        let b = syndromes.len();
        let bits = index_bits(v);
        let mut check_features = Tensor::zeros(b * c, 1);
        for (g, s) in syndromes.iter().enumerate() {
            if s.len() != c {
                return Err(GnnError::SyndromeLength {
                    expected: c,
                    got: s.len(),
                });
            }
            for j in s.0.iter_ones() {
                check_features.set(g * c + j, 0, 1.0);
            }
        }
        let one = Tensor::from_fn(v, bits, |i, k| ((i >> k) & 1) as f64);
        let mut var_features = Tensor::zeros(b * v, bits);
        for g in 0..b {
            for i in 0..v {
                var_features.row_mut(g * v + i).copy_from_slice(one.row(i));
            }
        }
        Ok(Self {
            graphs: b,
            var_rows: b * v,
            check_rows: b * c,
            edge_var: (0..b * e).map(|i| (i / e) * v + graph.edge_var[i % e]).collect(),
            edge_check: (0..b * e).map(|i| (i / e) * c + graph.edge_check[i % e]).collect(),
            var_features,
            check_features,
        })
    }
}

/// Node embeddings after encoding, exposed for inspection.
pub struct Embeddings {
    pub vars: Var,
    pub checks: Var,
}

pub fn encode_features(tape: &mut Tape, model: &GnnModel, batch: &GraphBatch) -> Result<Embeddings, GnnError> {
    let store = &model.store;
    let xv = tape.constant(batch.var_features.clone());
    let xc = tape.constant(batch.check_features.clone());
    let (wv, bv) = (tape.param(store, model.var_enc.0), tape.param(store, model.var_enc.1));
    let (wc, bc) = (tape.param(store, model.chk_enc.0), tape.param(store, model.chk_enc.1));
    Ok(Embeddings {
        vars: tape.linear(xv, wv, Some(bv))?,
        checks: tape.linear(xc, wc, Some(bc))?,
    })
}

fn half_step(
    tape: &mut Tape,
    store: &ParameterStore,
    layer: &TypedLayer,
    h_src: Var,
    src: &Index,
    h_dst: Var,
    dst: &Index,
) -> Result<Var, GnnError> {
    let msg = layer.message.bind(tape, store);
    let attn = layer.attention.bind(tape, store);
    let gru = layer.update.bind(tape, store);
    let agg = message_attention(tape, h_src, src.clone(), h_dst, dst.clone(), &msg, &attn)?;
    Ok(gru_cell(tape, agg, h_dst, &gru)?)
}

/// One round: checks update from variables, then variables from checks.
pub fn message_pass_round(
    tape: &mut Tape,
    model: &GnnModel,
    batch: &GraphBatch,
    h: Embeddings,
    round: usize,
) -> Result<Embeddings, GnnError> {
    let params = model.rounds[round.min(model.rounds.len() - 1)];
    let store = &model.store;
    let checks = half_step(tape, store, &params.layer_c, h.vars, &batch.edge_var, h.checks, &batch.edge_check)?;
    let source = if model.hp.simultaneous { h.checks } else { checks };
    let vars = half_step(tape, store, &params.layer_v, source, &batch.edge_check, h.vars, &batch.edge_var)?;
    Ok(Embeddings { vars, checks })
}

/// Readout logits `z_i`, one row per variable.
pub fn predict_logits(tape: &mut Tape, model: &GnnModel, h_vars: Var) -> Result<Var, GnnError> {
    let p = model.readout.bind(tape, &model.store);
    Ok(mlp2(tape, h_vars, &p)?)
}

/// Full forward pass; returns the `(graphs * V) x 1` logit column.
pub fn forward(tape: &mut Tape, model: &GnnModel, batch: &GraphBatch) -> Result<Var, GnnError> {
    let mut h = encode_features(tape, model, batch)?;
    for k in 0..model.hp.layers {
        h = message_pass_round(tape, model, batch, h, k)?;
    }
    predict_logits(tape, model, h.vars)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    /// `p(ê_i = 1 | s)` for each of the `2n` bits.
    pub probabilities: Vec<f64>,
    pub logits: Vec<f64>,
    pub e_hat: ErrorVector,
    pub syndrome_matched: bool,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn matches(graph: &TannerGraph, e: &BinVector, s: &Syndrome) -> bool {
    crate::bp::satisfies_syndrome(graph, e, &s.0)
}

/// Decodes several syndromes in one batched forward pass.
pub fn gnn_decode_batch(
    graph: &TannerGraph,
    syndromes: &[&Syndrome],
    model: &GnnModel,
) -> Result<Vec<DecodeOutput>, GnnError> {
    model.check_graph(graph)?;
    let batch = GraphBatch::new(graph, syndromes)?;
    let mut tape = Tape::new();
    let logits = forward(&mut tape, model, &batch)?;
    let z = tape.value(logits).data();
    let v = graph.var_count;
    Ok(syndromes
        .iter()
        .enumerate()
        .map(|(g, s)| {
            let logits = z[g * v..(g + 1) * v].to_vec();
            let probabilities: Vec<f64> = logits.iter().map(|&x| sigmoid(x)).collect();
            let e_hat = BinVector::from_bools(probabilities.iter().map(|&p| p > 0.5));
            let syndrome_matched = matches(graph, &e_hat, s);
            DecodeOutput {
                probabilities,
                logits,
                e_hat: ErrorVector(e_hat),
                syndrome_matched,
            }
        })
        .collect())
}

pub fn gnn_decode(code: &CssCode, s: &Syndrome, model: &GnnModel) -> Result<DecodeOutput, GnnError> {
    let graph = code.tanner_graph();
    let mut out = gnn_decode_batch(&graph, &[s], model)?;
    Ok(out.pop().expect("one output per syndrome"))
}

/// Mean-BCE of a batch recorded on `tape`, normalized by `normalizer`
/// label entries (pass the whole minibatch size when chunking).
pub fn gnn_loss_on_tape(
    tape: &mut Tape,
    model: &GnnModel,
    graph: &TannerGraph,
    samples: &[&(Syndrome, ErrorVector)],
    normalizer: f64,
) -> Result<Var, GnnError> {
    model.check_graph(graph)?;
    let syndromes: Vec<&Syndrome> = samples.iter().map(|(s, _)| s).collect();
    let batch = GraphBatch::new(graph, &syndromes)?;
    let logits = forward(tape, model, &batch)?;
    let mut labels = Vec::with_capacity(batch.var_rows);
    for (_, e) in samples {
        if e.0.len() != graph.var_count {
            return Err(GnnError::GraphMismatch {
                expected_vars: graph.var_count,
                expected_checks: graph.check_count,
                vars: e.0.len(),
                checks: graph.check_count,
            });
        }
        labels.extend((0..e.0.len()).map(|i| if e.0.get(i) { 1.0 } else { 0.0 }));
    }
    Ok(tape.bce_with_logits(logits, labels.into(), normalizer)?)
}

/// Accumulates the gradient of the mean minibatch loss into `model.store`,
/// running `hp.chunk` graphs per pass. Returns the loss.
pub fn gnn_accumulate_gradient(
    model: &mut GnnModel,
    graph: &TannerGraph,
    samples: &[&(Syndrome, ErrorVector)],
) -> Result<f64, GnnError> {
    let normalizer = (samples.len() * graph.var_count).max(1) as f64;
    let mut total = 0.0;
    for part in samples.chunks(model.hp.chunk.max(1)) {
        let mut tape = Tape::new();
        let loss = gnn_loss_on_tape(&mut tape, model, graph, part, normalizer)?;
        tape.backward(loss, &mut model.store)?;
        total += tape.value(loss).item();
    }
    Ok(total)
}

/// Mean loss over `samples` without gradients, `hp.chunk` graphs per pass.
pub fn gnn_mean_loss(
    model: &GnnModel,
    graph: &TannerGraph,
    samples: &[(Syndrome, ErrorVector)],
) -> Result<f64, GnnError> {
    if samples.is_empty() {
        return Err(GnnError::EmptyDataset);
    }
    let normalizer = (samples.len() * graph.var_count) as f64;
    let mut total = 0.0;
    for part in samples.chunks(model.hp.chunk.max(1)) {
        let refs: Vec<&(Syndrome, ErrorVector)> = part.iter().collect();
        let mut tape = Tape::new();
        let loss = gnn_loss_on_tape(&mut tape, model, graph, &refs, normalizer)?;
        total += tape.value(loss).item();
    }
    Ok(total)
}

impl Trainable for GnnModel {
    fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnTraining {
    pub model: GnnModel,
    pub history: Vec<EpochReport>,
}

/// Trains a fresh model for `code` on `dataset`.
pub fn train_gnn(
    code: &CssCode,
    dataset: &Dataset,
    hp: &GnnHyperparams,
    on_epoch: impl FnMut(&EpochReport, &GnnModel) -> ControlFlow<()>,
) -> Result<GnnTraining, GnnError> {
    let model = GnnModel::for_code(code, *hp)?;
    train_gnn_from(code, model, dataset, on_epoch)
}

/// Continues training `model` with its own hyperparameters; the Adam step
/// counter carries on from the store.
pub fn train_gnn_from(
    code: &CssCode,
    mut model: GnnModel,
    dataset: &Dataset,
    on_epoch: impl FnMut(&EpochReport, &GnnModel) -> ControlFlow<()>,
) -> Result<GnnTraining, GnnError> {
    if dataset.is_empty() {
        return Err(GnnError::EmptyDataset);
    }
    dataset.verify(code)?;
    let graph = code.tanner_graph();
    model.check_graph(&graph)?;
    let hp = model.hp;
    let config = FitConfig {
        epochs: hp.epochs,
        batch_size: hp.batch_size,
        adam: AdamConfig::with_lr(hp.lr),
        clip: hp.clip,
        // A resumed run draws fresh shuffles instead of replaying epoch one.
        seed: hp.seed ^ model.store.step(),
        plateau_patience: hp.plateau_patience,
        plateau_tol: hp.plateau_tol,
    };
    let history = fit(
        &mut model,
        dataset.len(),
        &config,
        |idx, model| {
            let batch: Vec<&(Syndrome, ErrorVector)> = idx.iter().map(|&i| &dataset.entries[i]).collect();
            gnn_accumulate_gradient(model, &graph, &batch)
        },
        on_epoch,
    )?;
    Ok(GnnTraining { model, history })
}
