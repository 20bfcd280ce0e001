//! Brute-force oracles shared by the integration tests. Nothing here calls
//! the elimination routines under test.
#![allow(dead_code)]

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use qldpc_core::{BinMatrix, BinVector};

pub type Bits = Vec<u8>;

pub fn dense(m: &BinMatrix) -> Vec<Bits> {
    (0..m.rows()).map(|r| (0..m.cols()).map(|c| m.get(r, c) as u8).collect()).collect()
}

pub fn bits(v: &BinVector) -> Bits {
    (0..v.len()).map(|i| v.get(i) as u8).collect()
}

pub fn naive_mul(a: &[Bits], b: &[Bits]) -> Vec<Bits> {
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| row.iter().zip(b).fold(0, |acc, (&x, br)| acc ^ (x & br[j])))
                .collect()
        })
        .collect()
}

pub fn naive_mat_vec(a: &[Bits], x: &[u8]) -> Bits {
    a.iter().map(|row| row.iter().zip(x).fold(0, |acc, (&r, &v)| acc ^ (r & v))).collect()
}

fn xor(a: &[u8], b: &[u8]) -> Bits {
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

/// Every vector in the row space, built by closing `{0}` under each row.
pub fn rowspace(m: &BinMatrix) -> HashSet<Bits> {
    let mut span: HashSet<Bits> = HashSet::from([vec![0; m.cols()]]);
    for row in dense(m) {
        if span.contains(&row) {
            continue;
        }
        let shifted: Vec<Bits> = span.iter().map(|v| xor(v, &row)).collect();
        span.extend(shifted);
    }
    span
}

/// Rank as log2 of the enumerated row space size.
pub fn enum_rank(m: &BinMatrix) -> usize {
    rowspace(m).len().trailing_zeros() as usize
}

/// All `x` of length `n` with `H x = s`, by exhaustive enumeration.
pub fn all_solutions(h: &[Bits], n: usize, s: &[u8]) -> Vec<Bits> {
    assert!(n <= 24, "enumeration too large");
    (0u32..1 << n)
        .map(|mask| (0..n).map(|i| ((mask >> i) & 1) as u8).collect::<Bits>())
        .filter(|x| naive_mat_vec(h, x) == s)
        .collect()
}

pub fn soft_weight(x: &[u8], llr: &[f64]) -> f64 {
    x.iter().zip(llr).filter(|(&b, _)| b == 1).map(|(_, l)| l).sum()
}

/// Exact per-bit posterior LLRs `log P(e_i=0|s)/P(e_i=1|s)` for iid bits
/// with prior LLRs `priors`, by summing over all errors consistent with `s`.
pub fn exact_posteriors(h: &[Bits], s: &[u8], priors: &[f64]) -> Vec<f64> {
    let n = priors.len();
    let mut p0 = vec![0.0; n];
    let mut p1 = vec![0.0; n];
    for x in all_solutions(h, n, s) {
        // Unnormalized probability: prod over set bits of exp(-llr).
        let w = (-soft_weight(&x, priors)).exp();
        for i in 0..n {
            if x[i] == 1 {
                p1[i] += w;
            } else {
                p0[i] += w;
            }
        }
    }
    p0.iter().zip(&p1).map(|(a, b)| (a / b).ln()).collect()
}

pub fn to_vector(x: &[u8]) -> BinVector {
    BinVector::from_bits(x)
}

/// Random cycle-free parity-check matrix on `n` bits: every check joins
/// variables from distinct components, so no cycle can close. Checks have
/// degree at least two.
pub fn random_tree_code(n: usize, rng: &mut ChaCha8Rng) -> BinMatrix {
    let mut comp: Vec<usize> = (0..n).collect();
    let mut rows = Vec::new();
    loop {
        let mut roots: Vec<usize> = comp.clone();
        roots.sort_unstable();
        roots.dedup();
        if roots.len() < 2 || (rows.len() >= 2 && rng.random_bool(0.15)) {
            break;
        }
        let degree = rng.random_range(2..=roots.len().min(4));
        let picked: Vec<usize> = index::sample(rng, roots.len(), degree).into_iter().map(|i| roots[i]).collect();
        let mut row = vec![0u8; n];
        for &root in &picked {
            let members: Vec<usize> = (0..n).filter(|&v| comp[v] == root).collect();
            row[members[rng.random_range(0..members.len())]] = 1;
        }
        let target = picked[0];
        for c in comp.iter_mut() {
            if picked.contains(c) {
                *c = target;
            }
        }
        rows.push(row);
    }
    BinMatrix::from_rows(&rows)
}
