//! Flooding-schedule syndrome belief propagation in the LLR domain.

use alloc::vec;
use alloc::vec::Vec;

use crate::channel::{ErrorVector, Syndrome};
use crate::gf2::BinVector;
use crate::tanner::TannerGraph;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BpError {
    #[error("syndrome has {got} bits but the graph has {expected} checks")]
    SyndromeLength { expected: usize, got: usize },
    #[error("{got} prior values for {expected} variables")]
    PriorLength { expected: usize, got: usize },
    #[error("invalid BP configuration: {0}")]
    Config(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpConfig {
    pub max_iter: usize,
    /// Every message is clipped to `±llr_clamp`.
    pub llr_clamp: f64,
    /// Stop as soon as the hard decision reproduces the syndrome.
    pub early_stop: bool,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            max_iter: 12,
            llr_clamp: 20.0,
            early_stop: true,
        }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<(), BpError> {
        if self.max_iter == 0 {
            return Err(BpError::Config("max_iter must be at least 1"));
        }
        if !(self.llr_clamp > 0.0 && self.llr_clamp.is_finite()) {
            return Err(BpError::Config("llr_clamp must be positive and finite"));
        }
        Ok(())
    }
}

/// Messages after one full iteration, indexed by edge id / variable.
#[derive(Debug, Clone, PartialEq)]
pub struct BpState {
    pub v2c: Vec<f64>,
    pub c2v: Vec<f64>,
    pub posterior: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpResult {
    pub e_hat: ErrorVector,
    pub posterior_llr: Vec<f64>,
    pub converged: bool,
    pub iterations_used: usize,
}

#[inline]
pub(crate) fn clamp(x: f64, limit: f64) -> f64 {
    x.clamp(-limit, limit)
}

/// `(-1)^s · 2 atanh(Π_{i≠j} tanh(in_i / 2))` for every `j`, clipped.
///
/// A degree-one check has an empty product, taken as `+1`, so its single
/// output saturates at `±clamp_limit`.
pub fn check_node_update(incoming: &[f64], s_c: bool, clamp_limit: f64) -> Vec<f64> {
    let mut out = vec![0.0; incoming.len()];
    let x: Vec<f64> = incoming.iter().map(|&v| clamp(v, clamp_limit)).collect();
    leave_one_out_update(&x, s_c, clamp_limit, &mut out);
    out
}

/// `2 atanh(tanh(a/2) tanh(b/2))` in a form that stays accurate when
/// either argument is large. `+inf` is the identity.
#[inline]
pub(crate) fn boxplus(a: f64, b: f64) -> f64 {
    if a == f64::INFINITY {
        return b;
    }
    if b == f64::INFINITY {
        return a;
    }
    let sign = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    sign * a.abs().min(b.abs()) + libm::log1p(libm::exp(-(a + b).abs())) - libm::log1p(libm::exp(-(a - b).abs()))
}

/// Leave-one-out check messages from the incoming LLRs `x` via prefix and
/// suffix scans.
#[inline]
pub(crate) fn leave_one_out_update(x: &[f64], s_c: bool, clamp_limit: f64, out: &mut [f64]) {
    let d = x.len();
    let sign = if s_c { -1.0 } else { 1.0 };
    let mut prefix = f64::INFINITY;
    // out[j] temporarily holds the combination of x[..j].
    for j in 0..d {
        out[j] = prefix;
        prefix = boxplus(prefix, x[j]);
    }
    let mut suffix = f64::INFINITY;
    for j in (0..d).rev() {
        let combined = boxplus(out[j], suffix);
        suffix = boxplus(suffix, x[j]);
        out[j] = clamp(sign * combined, clamp_limit);
    }
}

/// Multipliers applied inside the flooding iteration.
///
/// Plain BP uses all-ones; neural BP supplies trained values. Iteration
/// index `t` counts from zero.
pub(crate) trait MessageWeights {
    fn prior_scale(&self, t: usize, v: usize) -> f64;
    fn edge_weight(&self, t: usize, e: usize) -> f64;
    fn readout_prior_scale(&self, v: usize) -> f64;
    fn readout_edge_weight(&self, e: usize) -> f64;
}

pub(crate) struct UnitWeights;

impl MessageWeights for UnitWeights {
    #[inline]
    fn prior_scale(&self, _: usize, _: usize) -> f64 {
        1.0
    }
    #[inline]
    fn edge_weight(&self, _: usize, _: usize) -> f64 {
        1.0
    }
    #[inline]
    fn readout_prior_scale(&self, _: usize) -> f64 {
        1.0
    }
    #[inline]
    fn readout_edge_weight(&self, _: usize) -> f64 {
        1.0
    }
}

pub(crate) fn check_inputs(graph: &TannerGraph, s: &Syndrome, priors: &[f64]) -> Result<(), BpError> {
    if s.len() != graph.check_count {
        return Err(BpError::SyndromeLength {
            expected: graph.check_count,
            got: s.len(),
        });
    }
    if priors.len() != graph.var_count {
        return Err(BpError::PriorLength {
            expected: graph.var_count,
            got: priors.len(),
        });
    }
    Ok(())
}

/// Whether `e` satisfies every check of `graph` against `s`.
pub fn satisfies_syndrome(graph: &TannerGraph, e: &BinVector, s: &BinVector) -> bool {
    graph.check_edges.iter().enumerate().all(|(c, edges)| {
        let parity = edges.iter().filter(|&&ed| e.get(graph.edge_var[ed])).count() & 1 == 1;
        parity == s.get(c)
    })
}

/// Shared flooding loop; `observe` sees the state after every iteration.
pub(crate) fn flood<W: MessageWeights>(
    graph: &TannerGraph,
    s: &Syndrome,
    priors: &[f64],
    config: &BpConfig,
    weights: &W,
    mut observe: impl FnMut(usize, &BpState),
) -> BpResult {
    let lim = config.llr_clamp;
    let edges = graph.edge_count();
    let mut state = BpState {
        v2c: vec![0.0; edges],
        c2v: vec![0.0; edges],
        posterior: priors.to_vec(),
    };
    let mut in_buf = Vec::new();
    let mut out_buf = Vec::new();
    let mut e_hat = BinVector::zeros(graph.var_count);
    let mut converged = false;
    let mut used = 0;
    for t in 0..config.max_iter {
        used = t + 1;
        // Variable to check.
        for (v, var_edges) in graph.var_edges.iter().enumerate() {
            let mut total = priors[v] * weights.prior_scale(t, v);
            for &e in var_edges {
                total += weights.edge_weight(t, e) * state.c2v[e];
            }
            for &e in var_edges {
                state.v2c[e] = clamp(total - weights.edge_weight(t, e) * state.c2v[e], lim);
            }
        }
        // Check to variable.
        for (c, check_edges) in graph.check_edges.iter().enumerate() {
            in_buf.clear();
            in_buf.extend(check_edges.iter().map(|&e| state.v2c[e]));
            out_buf.resize(check_edges.len(), 0.0);
            leave_one_out_update(&in_buf, s.0.get(c), lim, &mut out_buf);
            for (&e, &m) in check_edges.iter().zip(&out_buf) {
                state.c2v[e] = m;
            }
        }
        // Readout and hard decision.
        for (v, var_edges) in graph.var_edges.iter().enumerate() {
            let mut mu = priors[v] * weights.readout_prior_scale(v);
            for &e in var_edges {
                mu += weights.readout_edge_weight(e) * state.c2v[e];
            }
            state.posterior[v] = mu;
            e_hat.set(v, mu < 0.0);
        }
        observe(t, &state);
        converged = satisfies_syndrome(graph, &e_hat, &s.0);
        if converged && config.early_stop {
            break;
        }
    }
    BpResult {
        e_hat: ErrorVector(e_hat),
        posterior_llr: state.posterior,
        converged,
        iterations_used: used,
    }
}

/// BP with the same prior LLR on every variable.
pub fn bp_decode(graph: &TannerGraph, s: &Syndrome, prior: f64, config: &BpConfig) -> Result<BpResult, BpError> {
    let priors = vec![prior; graph.var_count];
    bp_decode_with_priors(graph, s, &priors, config)
}

pub fn bp_decode_with_priors(
    graph: &TannerGraph,
    s: &Syndrome,
    priors: &[f64],
    config: &BpConfig,
) -> Result<BpResult, BpError> {
    config.validate()?;
    check_inputs(graph, s, priors)?;
    Ok(flood(graph, s, priors, config, &UnitWeights, |_, _| {}))
}

/// Runs BP and records the message state after every iteration.
pub fn bp_trace(
    graph: &TannerGraph,
    s: &Syndrome,
    priors: &[f64],
    config: &BpConfig,
) -> Result<(BpResult, Vec<BpState>), BpError> {
    config.validate()?;
    check_inputs(graph, s, priors)?;
    let mut trace = Vec::new();
    let result = flood(graph, s, priors, config, &UnitWeights, |_, st| trace.push(st.clone()));
    Ok((result, trace))
}
