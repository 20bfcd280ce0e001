//! Ordered-statistics post-processing of BP soft output.
//!
//! Columns of `H` are ranked by how likely their bit is flipped (ascending
//! posterior LLR, lower index first on ties). Elimination in that order picks
//! an information set; the order-0 solution sets every other bit to zero and
//! solves for the pivots. Higher orders additionally try flipping small sets
//! of non-pivot bits and keep the candidate of least soft weight.

use alloc::vec::Vec;

use crate::bp::{bp_decode, BpConfig, BpError};
use crate::channel::{ErrorVector, Syndrome};
use crate::codes::CssCode;
use crate::gf2::{BinMatrix, BinVector};
use crate::tanner::TannerGraph;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OsdError {
    #[error("syndrome is not in the column space of H")]
    InconsistentSyndrome,
    #[error("OSD input sizes disagree: H is {rows}x{cols}, syndrome {syndrome}, llr {llr}")]
    Dimension {
        rows: usize,
        cols: usize,
        syndrome: usize,
        llr: usize,
    },
    #[error(transparent)]
    Bp(#[from] BpError),
}

/// Which flip patterns on the non-pivot coordinates are searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OsdStrategy {
    /// Every pattern of weight `<= order`, by weight then lexicographically.
    #[default]
    Exhaustive,
    /// All single flips, plus all pairs among the `order` least reliable
    /// non-pivot bits.
    CombinationSweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OsdConfig {
    pub order: usize,
    /// Maximum number of patterns examined, counting the empty pattern.
    pub candidate_limit: Option<usize>,
    pub strategy: OsdStrategy,
}

impl OsdConfig {
    pub fn order(order: usize) -> Self {
        Self {
            order,
            ..Self::default()
        }
    }
}

/// `Σ llr_i` over the ones of `e`.
pub fn soft_weight(e: &BinVector, llr: &[f64]) -> f64 {
    e.iter_ones().map(|i| llr[i]).sum()
}

/// Columns sorted by ascending LLR; ties keep the lower index first.
pub fn reliability_order(llr: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..llr.len()).collect();
    order.sort_by(|&a, &b| llr[a].total_cmp(&llr[b]).then(a.cmp(&b)));
    order
}

struct Search<'a> {
    llr: &'a [f64],
    pivots: &'a [usize],
    free: &'a [usize],
    /// Pivot-row bits toggled by flipping each free coordinate.
    deltas: Vec<BinVector>,
    remaining: usize,
    best_cost: f64,
    best_flips: Vec<usize>,
    flips: Vec<usize>,
}

impl Search<'_> {
    fn cost(&self, pivot_bits: &BinVector) -> f64 {
        let free_cost: f64 = self.flips.iter().map(|&f| self.llr[self.free[f]]).sum();
        free_cost + pivot_bits.iter_ones().map(|i| self.llr[self.pivots[i]]).sum::<f64>()
    }

    /// Returns false once the candidate budget is spent.
    fn consider(&mut self, pivot_bits: &BinVector) -> bool {
        if self.remaining == 0 {
            return false;
        }
        self.remaining -= 1;
        let c = self.cost(pivot_bits);
        if c < self.best_cost {
            self.best_cost = c;
            self.best_flips.clone_from(&self.flips);
        }
        true
    }

    /// Depth-first walk over `weight`-subsets of `pool`, lexicographic.
    fn combos(&mut self, acc: &BinVector, start: usize, pool: usize, weight: usize) -> bool {
        if weight == 0 {
            return self.consider(acc);
        }
        for f in start..pool {
            if pool - f < weight {
                break;
            }
            let next = acc.xor(&self.deltas[f]);
            self.flips.push(f);
            let go_on = self.combos(&next, f + 1, pool, weight - 1);
            self.flips.pop();
            if !go_on {
                return false;
            }
        }
        true
    }
}

/// OSD on one parity-check block. The result always satisfies `H e = s`.
pub fn osd_postprocess(
    h: &BinMatrix,
    s: &BinVector,
    llr: &[f64],
    config: &OsdConfig,
) -> Result<BinVector, OsdError> {
    let (m, n) = h.shape();
    if s.len() != m || llr.len() != n {
        return Err(OsdError::Dimension {
            rows: m,
            cols: n,
            syndrome: s.len(),
            llr: llr.len(),
        });
    }
    let order = reliability_order(llr);
    let mut aug = BinMatrix::zeros(m, n + 1);
    for r in 0..m {
        for c in h.row_support(r) {
            aug.set(r, c, true);
        }
        if s.get(r) {
            aug.set(r, n, true);
        }
    }
    let pivots = aug.eliminate(&order);
    let rank = pivots.len();
    if (rank..m).any(|r| aug.get(r, n)) {
        return Err(OsdError::InconsistentSyndrome);
    }
    let mut is_pivot = alloc::vec![false; n];
    for &p in &pivots {
        is_pivot[p] = true;
    }
    let free: Vec<usize> = order.iter().copied().filter(|&c| !is_pivot[c]).collect();
    let base = BinVector::from_bools((0..rank).map(|r| aug.get(r, n)));
    let deltas = free
        .iter()
        .map(|&f| BinVector::from_bools((0..rank).map(|r| aug.get(r, f))))
        .collect();

    let mut search = Search {
        llr,
        pivots: &pivots,
        free: &free,
        deltas,
        remaining: config.candidate_limit.unwrap_or(usize::MAX).max(1),
        best_cost: f64::INFINITY,
        best_flips: Vec::new(),
        flips: Vec::new(),
    };
    search.consider(&base);
    match config.strategy {
        OsdStrategy::Exhaustive => {
            for w in 1..=config.order.min(free.len()) {
                if !search.combos(&base, 0, free.len(), w) {
                    break;
                }
            }
        }
        OsdStrategy::CombinationSweep => {
            if config.order > 0 && search.combos(&base, 0, free.len(), 1) {
                let pool = config.order.min(free.len());
                search.combos(&base, 0, pool, 2);
            }
        }
    }

    let mut pivot_bits = base;
    let mut e = BinVector::zeros(n);
    for &f in &search.best_flips {
        pivot_bits.xor_assign(&search.deltas[f]);
        e.set(free[f], true);
    }
    for r in pivot_bits.iter_ones() {
        e.set(pivots[r], true);
    }
    debug_assert_eq!(h.mat_vec(&e).ok().as_ref(), Some(s));
    Ok(e)
}

/// BP, falling back to per-block OSD when BP does not reproduce `s`.
pub fn bp_osd_decode(
    code: &CssCode,
    graph: &TannerGraph,
    s: &Syndrome,
    prior: f64,
    bp_config: &BpConfig,
    osd_config: &OsdConfig,
) -> Result<ErrorVector, OsdError> {
    let bp = bp_decode(graph, s, prior, bp_config)?;
    if bp.converged {
        return Ok(bp.e_hat);
    }
    let n = code.n;
    let mx = code.x_checks();
    let sx = s.0.slice(0, mx);
    let sz = s.0.slice(mx, s.len() - mx);
    let x = osd_postprocess(&code.hz, &sx, &bp.posterior_llr[..n], osd_config)?;
    let z = osd_postprocess(&code.hx, &sz, &bp.posterior_llr[n..], osd_config)?;
    Ok(ErrorVector::from_parts(&x, &z))
}
