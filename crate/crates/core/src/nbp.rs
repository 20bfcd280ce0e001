//! Neural BP: flooding BP with a trainable multiplier on every prior and
//! every check-to-variable message, per iteration and at the readout.
//!
//! With all multipliers equal to one the decoder is plain BP, bit for bit.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use crate::bp::{check_inputs, flood, BpConfig, BpError, BpResult, BpState, MessageWeights};
use crate::channel::{prior_llr, ChannelError, ChannelParams, Dataset, ErrorVector, Syndrome};
use crate::codes::CssCode;
use crate::nn::{fit, AdamConfig, EpochReport, FitConfig, GradClip, Index, NnError, ParamId, ParameterStore, Tape, Tensor, Trainable, Var};
use crate::tanner::TannerGraph;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NbpError {
    #[error("model expects {expected_vars} variables / {expected_edges} edges, graph has {vars} / {edges}")]
    GraphMismatch {
        expected_vars: usize,
        expected_edges: usize,
        vars: usize,
        edges: usize,
    },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("missing parameter {0}")]
    MissingParameter(alloc::string::String),
    #[error(transparent)]
    Bp(#[from] BpError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NbpConfig {
    pub iterations: usize,
    /// Share one weight set across all iterations.
    pub tied: bool,
    pub llr_clamp: f64,
    pub early_stop: bool,
}

impl Default for NbpConfig {
    fn default() -> Self {
        let bp = BpConfig::default();
        Self {
            iterations: bp.max_iter,
            tied: false,
            llr_clamp: bp.llr_clamp,
            early_stop: bp.early_stop,
        }
    }
}

impl NbpConfig {
    pub fn bp_config(&self) -> BpConfig {
        BpConfig {
            max_iter: self.iterations,
            llr_clamp: self.llr_clamp,
            early_stop: self.early_stop,
        }
    }
}

/// Edge weights `w[t]` (`E x 1`) and prior scales `b[t]` (`V x 1`) per
/// iteration, plus the readout pair. Values live in `store`.
#[derive(Debug, Clone, PartialEq)]
pub struct NbpModel {
    pub config: NbpConfig,
    pub var_count: usize,
    pub edge_count: usize,
    pub store: ParameterStore,
    w: Vec<ParamId>,
    b: Vec<ParamId>,
    w_out: ParamId,
    b_out: ParamId,
}

impl NbpModel {
    /// All weights and scales set to one.
    pub fn new(graph: &TannerGraph, config: NbpConfig) -> Self {
        let (v, e) = (graph.var_count, graph.edge_count());
        let sets = if config.tied { 1 } else { config.iterations };
        let mut store = ParameterStore::new();
        for t in 0..sets {
            store.add(format!("w.{t}"), Tensor::full(e, 1, 1.0));
            store.add(format!("b.{t}"), Tensor::full(v, 1, 1.0));
        }
        store.add("w_out", Tensor::full(e, 1, 1.0));
        store.add("b_out", Tensor::full(v, 1, 1.0));
        Self::from_store(graph, config, store).expect("freshly built store is complete")
    }

    /// Wraps an existing store, e.g. one loaded from a checkpoint.
    pub fn from_store(graph: &TannerGraph, config: NbpConfig, store: ParameterStore) -> Result<Self, NbpError> {
        let (vars, edges) = (graph.var_count, graph.edge_count());
        let sets = if config.tied { 1 } else { config.iterations };
        let lookup = |name: &str, rows: usize| -> Result<ParamId, NbpError> {
            let id = store.id(name).ok_or_else(|| NbpError::MissingParameter(name.into()))?;
            if store.value(id).shape() != (rows, 1) {
                return Err(NbpError::GraphMismatch {
                    expected_vars: vars,
                    expected_edges: edges,
                    vars: if rows == vars { store.value(id).rows() } else { vars },
                    edges: if rows == edges { store.value(id).rows() } else { edges },
                });
            }
            Ok(id)
        };
        let mut w = Vec::with_capacity(sets);
        let mut b = Vec::with_capacity(sets);
        for t in 0..sets {
            w.push(lookup(&format!("w.{t}"), edges)?);
            b.push(lookup(&format!("b.{t}"), vars)?);
        }
        let w_out = lookup("w_out", edges)?;
        let b_out = lookup("b_out", vars)?;
        Ok(Self {
            config,
            var_count: vars,
            edge_count: edges,
            store,
            w,
            b,
            w_out,
            b_out,
        })
    }

    fn set(&self, t: usize) -> usize {
        t.min(self.w.len() - 1)
    }

    pub fn edge_weights(&self, t: usize) -> &[f64] {
        self.store.value(self.w[self.set(t)]).data()
    }

    pub fn edge_weights_mut(&mut self, t: usize) -> &mut [f64] {
        let id = self.w[self.set(t)];
        self.store.value_mut(id).data_mut()
    }

    pub fn prior_scales(&self, t: usize) -> &[f64] {
        self.store.value(self.b[self.set(t)]).data()
    }

    pub fn prior_scales_mut(&mut self, t: usize) -> &mut [f64] {
        let id = self.b[self.set(t)];
        self.store.value_mut(id).data_mut()
    }

    fn check_graph(&self, graph: &TannerGraph) -> Result<(), NbpError> {
        if graph.var_count != self.var_count || graph.edge_count() != self.edge_count {
            return Err(NbpError::GraphMismatch {
                expected_vars: self.var_count,
                expected_edges: self.edge_count,
                vars: graph.var_count,
                edges: graph.edge_count(),
            });
        }
        Ok(())
    }
}

struct ModelWeights<'a> {
    model: &'a NbpModel,
    w_out: &'a [f64],
    b_out: &'a [f64],
}

impl MessageWeights for ModelWeights<'_> {
    #[inline]
    fn prior_scale(&self, t: usize, v: usize) -> f64 {
        self.model.prior_scales(t)[v]
    }
    #[inline]
    fn edge_weight(&self, t: usize, e: usize) -> f64 {
        self.model.edge_weights(t)[e]
    }
    #[inline]
    fn readout_prior_scale(&self, v: usize) -> f64 {
        self.b_out[v]
    }
    #[inline]
    fn readout_edge_weight(&self, e: usize) -> f64 {
        self.w_out[e]
    }
}

fn run(
    graph: &TannerGraph,
    s: &Syndrome,
    prior: f64,
    model: &NbpModel,
    observe: impl FnMut(usize, &BpState),
) -> Result<BpResult, NbpError> {
    model.check_graph(graph)?;
    let config = model.config.bp_config();
    config.validate()?;
    let priors = vec![prior; graph.var_count];
    check_inputs(graph, s, &priors)?;
    let weights = ModelWeights {
        model,
        w_out: model.store.value(model.w_out).data(),
        b_out: model.store.value(model.b_out).data(),
    };
    Ok(flood(graph, s, &priors, &config, &weights, observe))
}

pub fn nbp_decode(graph: &TannerGraph, s: &Syndrome, prior: f64, model: &NbpModel) -> Result<BpResult, NbpError> {
    run(graph, s, prior, model, |_, _| {})
}

/// Like [`nbp_decode`], also returning the messages after every iteration.
pub fn nbp_trace(
    graph: &TannerGraph,
    s: &Syndrome,
    prior: f64,
    model: &NbpModel,
) -> Result<(BpResult, Vec<BpState>), NbpError> {
    let mut trace = Vec::new();
    let result = run(graph, s, prior, model, |_, st| trace.push(st.clone()))?;
    Ok((result, trace))
}

/// Index arrays for a batch of `count` copies of one graph.
struct BatchLayout {
    var_rows: usize,
    tile_e: Index,
    tile_v: Index,
    edge_var: Index,
    check_ptr: Index,
}

impl BatchLayout {
    fn new(graph: &TannerGraph, count: usize) -> Self {
        let (v, e) = (graph.var_count, graph.edge_count());
        let mut check_ptr = Vec::with_capacity(count * graph.check_count + 1);
        for b in 0..count {
            let mut start = b * e;
            for edges in &graph.check_edges {
                debug_assert!(edges.first().is_none_or(|&f| f == start - b * e));
                check_ptr.push(start);
                start += edges.len();
            }
        }
        check_ptr.push(count * e);
        Self {
            var_rows: count * v,
            tile_e: (0..count * e).map(|i| i % e.max(1)).collect(),
            tile_v: (0..count * v).map(|i| i % v.max(1)).collect(),
            edge_var: (0..count * e).map(|i| (i / e) * v + graph.edge_var[i % e]).collect(),
            check_ptr: check_ptr.into(),
        }
    }
}

/// Records the unrolled decoder on `tape` for a batch and returns the mean
/// binary cross-entropy between `sigmoid(-μ_v)` and the error bits.
///
/// Every iteration runs (no early stop); the loss is taken at the readout.
pub fn nbp_loss_on_tape(
    tape: &mut Tape,
    model: &NbpModel,
    graph: &TannerGraph,
    batch: &[&(Syndrome, ErrorVector)],
    prior: f64,
) -> Result<Var, NbpError> {
    model.check_graph(graph)?;
    let store = &model.store;
    let lim = model.config.llr_clamp;
    let layout = BatchLayout::new(graph, batch.len());
    let rows = layout.var_rows;
    let mut signs = Vec::with_capacity(batch.len() * graph.check_count);
    let mut labels = Vec::with_capacity(rows);
    for (s, e) in batch {
        if s.len() != graph.check_count || e.0.len() != graph.var_count {
            return Err(BpError::SyndromeLength {
                expected: graph.check_count,
                got: s.len(),
            }
            .into());
        }
        signs.extend((0..s.len()).map(|c| s.0.get(c)));
        labels.extend((0..e.0.len()).map(|v| if e.0.get(v) { 1.0 } else { 0.0 }));
    }
    let signs: Arc<[bool]> = signs.into();
    let priors = tape.constant(Tensor::full(rows, 1, prior));

    let mut c2v: Option<Var> = None;
    for t in 0..model.config.iterations {
        let set = model.set(t);
        let b_t = tape.param(store, model.b[set]);
        let b_t = tape.gather_rows(b_t, layout.tile_v.clone())?;
        let scaled = tape.mul(priors, b_t)?;
        let v2c = match c2v {
            None => tape.gather_rows(scaled, layout.edge_var.clone())?,
            Some(msgs) => {
                let w_t = tape.param(store, model.w[set]);
                let w_t = tape.gather_rows(w_t, layout.tile_e.clone())?;
                let weighted = tape.mul(msgs, w_t)?;
                let sums = tape.scatter_add_rows(weighted, layout.edge_var.clone(), rows)?;
                let total = tape.add(scaled, sums)?;
                let total_e = tape.gather_rows(total, layout.edge_var.clone())?;
                tape.sub(total_e, weighted)?
            }
        };
        let v2c = tape.clamp(v2c, -lim, lim);
        c2v = Some(tape.check_update(v2c, layout.check_ptr.clone(), signs.clone(), lim)?);
    }
    let b_out = tape.param(store, model.b_out);
    let b_out = tape.gather_rows(b_out, layout.tile_v.clone())?;
    let mut mu = tape.mul(priors, b_out)?;
    if let Some(msgs) = c2v {
        let w_out = tape.param(store, model.w_out);
        let w_out = tape.gather_rows(w_out, layout.tile_e.clone())?;
        let weighted = tape.mul(msgs, w_out)?;
        let sums = tape.scatter_add_rows(weighted, layout.edge_var.clone(), rows)?;
        mu = tape.add(mu, sums)?;
    }
    let logits = tape.scale(mu, -1.0);
    Ok(tape.bce_with_logits(logits, labels.into(), rows.max(1) as f64)?)
}

/// Mean loss over `samples`, evaluated in chunks of `chunk`.
pub fn nbp_mean_loss(
    model: &NbpModel,
    graph: &TannerGraph,
    samples: &[(Syndrome, ErrorVector)],
    prior: f64,
    chunk: usize,
) -> Result<f64, NbpError> {
    if samples.is_empty() {
        return Err(NbpError::EmptyDataset);
    }
    let mut total = 0.0;
    for part in samples.chunks(chunk.max(1)) {
        let refs: Vec<&(Syndrome, ErrorVector)> = part.iter().collect();
        let mut tape = Tape::new();
        let loss = nbp_loss_on_tape(&mut tape, model, graph, &refs, prior)?;
        total += tape.value(loss).item() * part.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NbpTrainConfig {
    pub model: NbpConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip: GradClip,
    pub seed: u64,
}

impl Default for NbpTrainConfig {
    fn default() -> Self {
        Self {
            model: NbpConfig::default(),
            epochs: 20,
            batch_size: 32,
            lr: 4e-4,
            clip: GradClip::GlobalNorm(0.5),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NbpTraining {
    pub model: NbpModel,
    /// Mean loss of the untrained model over the dataset.
    pub initial_loss: f64,
    pub history: Vec<EpochReport>,
}

/// Trains from the all-ones initialization on `dataset`.
pub fn train_nbp(
    code: &CssCode,
    dataset: &Dataset,
    config: &NbpTrainConfig,
    on_epoch: impl FnMut(&EpochReport) -> ControlFlow<()>,
) -> Result<NbpTraining, NbpError> {
    let graph = code.tanner_graph();
    let model = NbpModel::new(&graph, config.model);
    train_nbp_from(code, &graph, model, dataset, config, on_epoch)
}

impl Trainable for NbpModel {
    fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }
}

/// Continues training an existing model (the Adam step counter carries on).
pub fn train_nbp_from(
    code: &CssCode,
    graph: &TannerGraph,
    mut model: NbpModel,
    dataset: &Dataset,
    config: &NbpTrainConfig,
    mut on_epoch: impl FnMut(&EpochReport) -> ControlFlow<()>,
) -> Result<NbpTraining, NbpError> {
    if dataset.is_empty() {
        return Err(NbpError::EmptyDataset);
    }
    dataset.verify(code)?;
    let prior = prior_llr(ChannelParams::new(dataset.meta.p_f)?)?;
    let initial_loss = nbp_mean_loss(&model, graph, &dataset.entries, prior, 256)?;
    let fit_config = FitConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
        adam: AdamConfig::with_lr(config.lr),
        clip: config.clip,
        seed: config.seed ^ model.store.step(),
        plateau_patience: None,
        plateau_tol: 0.0,
    };
    let history = fit(
        &mut model,
        dataset.len(),
        &fit_config,
        |idx, model| {
            let batch: Vec<&(Syndrome, ErrorVector)> = idx.iter().map(|&i| &dataset.entries[i]).collect();
            let mut tape = Tape::new();
            let loss = nbp_loss_on_tape(&mut tape, model, graph, &batch, prior)?;
            tape.backward(loss, &mut model.store)?;
            Ok::<f64, NbpError>(tape.value(loss).item())
        },
        |report, _| on_epoch(report),
    )?;
    Ok(NbpTraining {
        model,
        initial_loss,
        history,
    })
}
