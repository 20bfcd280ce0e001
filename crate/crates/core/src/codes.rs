//! CSS code construction: hypergraph-product and bicycle families.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gf2::{BinMatrix, BinVector, Gf2Error};
use crate::tanner::TannerGraph;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodeError {
    #[error(transparent)]
    Gf2(#[from] Gf2Error),
    #[error("Hx and Hz have different column counts ({hx} vs {hz})")]
    ColumnMismatch { hx: usize, hz: usize },
    #[error("Hx * Hz^T is nonzero; construction is not a CSS code")]
    NotOrthogonal,
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("no bicycle code with k = {k} found after {attempts} attempts")]
    BicycleExhausted { k: usize, attempts: usize },
}

/// A classical binary linear code given by its parity-check matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassicalCode {
    pub h: BinMatrix,
    pub n: usize,
    pub k: usize,
    /// Minimum distance, when known.
    pub d: Option<usize>,
    /// Generator polynomial as a bit mask (bit i = coefficient of x^i).
    pub generator: Option<u64>,
}

impl ClassicalCode {
    pub fn from_parity_check(h: BinMatrix) -> Self {
        let n = h.cols();
        let k = n - h.rank();
        Self {
            h,
            n,
            k,
            d: None,
            generator: None,
        }
    }

    /// Systematic parity check `[P^T | I]` of the cyclic code generated by `g`.
    ///
    /// Column `i < k` is message bit `x^(n-k+i)`; column `k + j` is parity
    /// coefficient `x^j`.
    pub fn cyclic_systematic(n: usize, generator: u64) -> Result<Self, CodeError> {
        if generator == 0 || generator & 1 == 0 {
            return Err(CodeError::InvalidParameters(format!(
                "generator {generator:#b} must have a constant term"
            )));
        }
        let deg = 63 - generator.leading_zeros() as usize;
        if deg == 0 || deg >= n || n > 63 {
            return Err(CodeError::InvalidParameters(format!(
                "generator degree {deg} incompatible with length {n}"
            )));
        }
        let r = deg;
        let k = n - r;
        let mut h = BinMatrix::zeros(r, n);
        for i in 0..k {
            let rem = poly_mod(1u64 << (r + i), generator);
            for j in 0..r {
                if rem >> j & 1 == 1 {
                    h.set(j, i, true);
                }
            }
        }
        for j in 0..r {
            h.set(j, k + j, true);
        }
        let mut code = Self::from_parity_check(h);
        code.generator = Some(generator);
        Ok(code)
    }

    /// Minimum distance by enumerating all codewords. Only for small `k`.
    pub fn min_distance_exhaustive(&self) -> usize {
        let basis = null_space(&self.h);
        assert!(basis.len() <= 24, "exhaustive distance only for small codes");
        let mut best = usize::MAX;
        for mask in 1u32..(1 << basis.len()) {
            let mut w = BinVector::zeros(self.n);
            for (i, b) in basis.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    w.xor_assign(b);
                }
            }
            best = best.min(w.weight());
        }
        best
    }
}

fn poly_mod(mut a: u64, g: u64) -> u64 {
    let dg = 63 - g.leading_zeros();
    while a != 0 && 63 - a.leading_zeros() >= dg {
        let shift = (63 - a.leading_zeros()) - dg;
        a ^= g << shift;
    }
    a
}

/// A basis of the right null space `{x : H x = 0}`.
pub fn null_space(h: &BinMatrix) -> Vec<BinVector> {
    let order: Vec<usize> = (0..h.cols()).collect();
    let e = h.rref(&order).expect("identity order is a permutation");
    let free: Vec<usize> = (0..h.cols()).filter(|c| !e.pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = BinVector::unit(h.cols(), f);
            for (row, &p) in e.pivots.iter().enumerate() {
                if e.reduced.get(row, f) {
                    v.set(p, true);
                }
            }
            v
        })
        .collect()
}

/// Generator of the [7,4,3] BCH (Hamming) code: x^3 + x + 1.
pub const BCH_7_4_GENERATOR: u64 = 0b1011;
/// Generator of the [15,7,5] BCH code: x^8 + x^7 + x^6 + x^4 + 1.
pub const BCH_15_7_GENERATOR: u64 = 0b1_1101_0001;

/// The [7,4,3] and [15,7,5] BCH seed codes for the [[129,28]] product code.
pub fn bch_seed_codes() -> (ClassicalCode, ClassicalCode) {
    let mut c1 = ClassicalCode::cyclic_systematic(7, BCH_7_4_GENERATOR).expect("valid generator");
    c1.d = Some(3);
    let mut c2 =
        ClassicalCode::cyclic_systematic(15, BCH_15_7_GENERATOR).expect("valid generator");
    c2.d = Some(5);
    (c1, c2)
}

/// How a bicycle code chooses the rows it drops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RowDeletion {
    /// Greedy: drop the row touching the heaviest columns, lowest index on ties.
    #[default]
    BalanceColumns,
    /// Uniformly random rows drawn from the seeded generator.
    Random,
}

/// Provenance recorded alongside a constructed code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Construction {
    HypergraphProduct {
        generators: [Option<u64>; 2],
        seed_shapes: [(usize, usize); 2],
    },
    Bicycle {
        seed: u64,
        /// Support of the circulant's first row.
        support: Vec<usize>,
        deleted_rows: Vec<usize>,
        deletion: RowDeletion,
        attempts: usize,
    },
    Explicit,
}

/// A CSS code `(Hx, Hz)` with `Hx Hz^T = 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CssCode {
    pub name: String,
    pub hx: BinMatrix,
    pub hz: BinMatrix,
    pub n: usize,
    pub k: usize,
    /// Maximum row weight over Hx and Hz.
    pub row_bound: usize,
    /// Maximum column weight over Hx and Hz.
    pub col_bound: usize,
    pub construction: Construction,
}

impl CssCode {
    /// Validates the CSS conditions and derives `n`, `k` and weight bounds.
    pub fn new(
        name: impl Into<String>,
        hx: BinMatrix,
        hz: BinMatrix,
        construction: Construction,
    ) -> Result<Self, CodeError> {
        if hx.cols() != hz.cols() {
            return Err(CodeError::ColumnMismatch {
                hx: hx.cols(),
                hz: hz.cols(),
            });
        }
        if !hx.mat_mul(&hz.transpose())?.is_zero() {
            return Err(CodeError::NotOrthogonal);
        }
        let n = hx.cols();
        let k = n - hx.rank() - hz.rank();
        let row_bound = (0..hx.rows())
            .map(|r| hx.row_weight(r))
            .chain((0..hz.rows()).map(|r| hz.row_weight(r)))
            .max()
            .unwrap_or(0);
        let col_bound = hx
            .column_weights()
            .into_iter()
            .chain(hz.column_weights())
            .max()
            .unwrap_or(0);
        Ok(Self {
            name: name.into(),
            hx,
            hz,
            n,
            k,
            row_bound,
            col_bound,
            construction,
        })
    }

    /// Total number of checks, `rows(Hx) + rows(Hz)`.
    pub fn m(&self) -> usize {
        self.hx.rows() + self.hz.rows()
    }

    /// Number of X-error syndrome bits, `rows(Hz)`.
    pub fn x_checks(&self) -> usize {
        self.hz.rows()
    }

    /// The matrix taking `(x|z)` to `(s_x|s_z) = (Hz x | Hx z)`.
    pub fn check_matrix(&self) -> BinMatrix {
        self.hz.block_diag(&self.hx)
    }

    pub fn tanner_graph(&self) -> TannerGraph {
        TannerGraph::from_matrix(&self.check_matrix())
    }

    /// FNV-1a hash of the shapes and packed contents of Hx and Hz.
    pub fn fingerprint(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |word: u64| {
            for byte in word.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        for m in [&self.hx, &self.hz] {
            eat(m.rows() as u64);
            eat(m.cols() as u64);
            for r in 0..m.rows() {
                for &w in m.row_words(r) {
                    eat(w);
                }
            }
        }
        h
    }
}

/// Hypergraph product of two classical codes.
///
/// `Hx = [H1 ⊗ I_n2 | I_m1 ⊗ H2^T]`, `Hz = [I_n1 ⊗ H2 | H1^T ⊗ I_m2]`.
pub fn build_hgp(c1: &ClassicalCode, c2: &ClassicalCode) -> Result<CssCode, CodeError> {
    let (h1, h2) = (&c1.h, &c2.h);
    let (m1, n1) = h1.shape();
    let (m2, n2) = h2.shape();
    let hx = h1
        .kron(&BinMatrix::identity(n2))
        .hstack(&BinMatrix::identity(m1).kron(&h2.transpose()))?;
    let hz = BinMatrix::identity(n1)
        .kron(h2)
        .hstack(&h1.transpose().kron(&BinMatrix::identity(m2)))?;
    let n = n1 * n2 + m1 * m2;
    let k_est = n - hx.rank() - hz.rank();
    CssCode::new(
        format!("hgp_{n}_{k_est}"),
        hx,
        hz,
        Construction::HypergraphProduct {
            generators: [c1.generator, c2.generator],
            seed_shapes: [(m1, n1), (m2, n2)],
        },
    )
}

/// Resampling budget for [`build_bicycle`].
pub const BICYCLE_MAX_ATTEMPTS: usize = 1000;

/// Bicycle code `[[n, k]]` from a random weight-`row_weight_v` circulant.
pub fn build_bicycle(
    n: usize,
    k: usize,
    row_weight_v: usize,
    seed: u64,
) -> Result<CssCode, CodeError> {
    build_bicycle_with(n, k, row_weight_v, seed, RowDeletion::BalanceColumns)
}

pub fn build_bicycle_with(
    n: usize,
    k: usize,
    row_weight_v: usize,
    seed: u64,
    deletion: RowDeletion,
) -> Result<CssCode, CodeError> {
    if n < 2 || n % 2 != 0 || k % 2 != 0 || k >= n {
        return Err(CodeError::InvalidParameters(format!(
            "bicycle needs even n >= 2 and even k < n, got n={n}, k={k}"
        )));
    }
    let half = n / 2;
    if row_weight_v == 0 || row_weight_v > half {
        return Err(CodeError::InvalidParameters(format!(
            "circulant weight {row_weight_v} must be in 1..={half}"
        )));
    }
    let drop = k / 2;
    if drop > half {
        return Err(CodeError::InvalidParameters(format!(
            "cannot delete {drop} of {half} rows"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 1..=BICYCLE_MAX_ATTEMPTS {
        let mut support = index::sample(&mut rng, half, row_weight_v).into_vec();
        support.sort_unstable();
        let mut v = BinVector::zeros(half);
        for &i in &support {
            v.set(i, true);
        }
        let c = BinMatrix::circulant(&v)?;
        let h_full = c.hstack(&c.transpose())?;
        let deleted = match deletion {
            RowDeletion::BalanceColumns => balanced_deletion(&h_full, drop),
            RowDeletion::Random => {
                let mut d = index::sample(&mut rng, half, drop).into_vec();
                d.sort_unstable();
                d
            }
        };
        let keep: Vec<usize> = (0..half).filter(|r| !deleted.contains(r)).collect();
        let h = h_full.select_rows(&keep);
        if n - 2 * h.rank() != k {
            continue;
        }
        return CssCode::new(
            format!("bicycle_{n}_{k}"),
            h.clone(),
            h,
            Construction::Bicycle {
                seed,
                support,
                deleted_rows: deleted,
                deletion,
                attempts: attempt,
            },
        );
    }
    Err(CodeError::BicycleExhausted {
        k,
        attempts: BICYCLE_MAX_ATTEMPTS,
    })
}

/// Greedily deletes `count` rows, each time the one whose support has the
/// largest total column weight; returns deleted rows sorted.
fn balanced_deletion(h: &BinMatrix, count: usize) -> Vec<usize> {
    let mut col_w = h.column_weights();
    let supports: Vec<Vec<usize>> = (0..h.rows()).map(|r| h.row_support(r)).collect();
    let mut alive = vec![true; h.rows()];
    let mut deleted = Vec::with_capacity(count);
    for _ in 0..count {
        let mut best: Option<(usize, usize)> = None;
        for (r, sup) in supports.iter().enumerate() {
            if !alive[r] {
                continue;
            }
            let score: usize = sup.iter().map(|&c| col_w[c]).sum();
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((r, score));
            }
        }
        let Some((r, _)) = best else { break };
        alive[r] = false;
        for &c in &supports[r] {
            col_w[c] -= 1;
        }
        deleted.push(r);
    }
    deleted.sort_unstable();
    deleted
}

#[cfg(test)]
mod tests {
    use super::*;

    fn repetition3() -> ClassicalCode {
        ClassicalCode::from_parity_check(BinMatrix::from_rows(&[[1u8, 1, 0], [0, 1, 1]]))
    }

    #[test]
    fn bch_seed_shapes_and_ranks() {
        let (c1, c2) = bch_seed_codes();
        assert_eq!(c1.h.shape(), (3, 7));
        assert_eq!(c1.h.rank(), 3);
        assert_eq!(c1.k, 4);
        assert_eq!(c2.h.shape(), (8, 15));
        assert_eq!(c2.h.rank(), 8);
        assert_eq!(c2.k, 7);
    }

    #[test]
    fn bch_minimum_distances_by_enumeration() {
        let (c1, c2) = bch_seed_codes();
        assert_eq!(c1.min_distance_exhaustive(), 3);
        assert_eq!(c2.min_distance_exhaustive(), 5);
    }

    #[test]
    fn bch_systematic_layout() {
        let (c1, _) = bch_seed_codes();
        // Identity block on the parity columns.
        for j in 0..3 {
            for c in 4..7 {
                assert_eq!(c1.h.get(j, c), c - 4 == j);
            }
        }
        // Every cyclic shift of the generator polynomial is a codeword.
        let g = BinVector::from_bits(&[1, 1, 0, 1, 0, 0, 0]);
        let to_cols = |v: &BinVector| {
            // coefficient x^j maps to column k + j for j < 3, column j - 3 otherwise.
            BinVector::from_bools((0..7).map(|c| if c < 4 { v.get(c + 3) } else { v.get(c - 4) }))
        };
        for s in 0..7 {
            let shifted = BinVector::from_bools((0..7).map(|j| g.get((j + 7 - s) % 7)));
            assert!(c1.h.mat_vec(&to_cols(&shifted)).unwrap().is_zero());
        }
    }

    #[test]
    fn hgp_of_bch_seeds_is_129_28() {
        let (c1, c2) = bch_seed_codes();
        let code = build_hgp(&c1, &c2).unwrap();
        assert_eq!(code.n, 129);
        assert_eq!(code.k, 28);
        assert_eq!(code.hx.shape(), (45, 129));
        assert_eq!(code.hz.shape(), (56, 129));
        assert_eq!(code.hx.rank() + code.hz.rank(), 101);
        assert_eq!(code.m(), 101);
        assert!(code.hx.mat_mul(&code.hz.transpose()).unwrap().is_zero());
        assert_eq!(code.name, "hgp_129_28");
    }

    #[test]
    fn hgp_of_repetition_code() {
        let r = repetition3();
        let code = build_hgp(&r, &r).unwrap();
        assert_eq!(code.n, 13);
        assert_eq!(code.k, 1);
        assert!(code.hx.mat_mul(&code.hz.transpose()).unwrap().is_zero());
    }

    #[test]
    fn hgp_is_deterministic() {
        let (c1, c2) = bch_seed_codes();
        assert_eq!(build_hgp(&c1, &c2).unwrap(), build_hgp(&c1, &c2).unwrap());
    }

    #[test]
    fn non_orthogonal_pair_rejected() {
        let hx = BinMatrix::from_rows(&[[1u8, 0, 0]]);
        let hz = BinMatrix::from_rows(&[[1u8, 1, 0]]);
        assert_eq!(
            CssCode::new("bad", hx, hz, Construction::Explicit),
            Err(CodeError::NotOrthogonal)
        );
    }

    #[test]
    fn bicycle_256_32() {
        let code = build_bicycle(256, 32, 8, 7).unwrap();
        assert_eq!((code.n, code.k), (256, 32));
        assert_eq!(code.hx.shape(), (112, 256));
        assert_eq!(code.hx, code.hz);
        for r in 0..code.hx.rows() {
            assert_eq!(code.hx.row_weight(r), 16);
        }
        let Construction::Bicycle { support, deleted_rows, .. } = &code.construction else {
            panic!("wrong construction tag");
        };
        assert_eq!(support.len(), 8);
        assert_eq!(deleted_rows.len(), 16);
        // Rebuild H_o and check self-orthogonality before deletion.
        let v = BinVector::from_bools((0..128).map(|i| support.contains(&i)));
        let c = BinMatrix::circulant(&v).unwrap();
        let ho = c.hstack(&c.transpose()).unwrap();
        assert!(ho.mat_mul(&ho.transpose()).unwrap().is_zero());
        assert!((0..128).all(|r| ho.row_weight(r) == 16));
    }

    #[test]
    fn bicycle_small_and_deterministic() {
        let a = build_bicycle(8, 2, 2, 3).unwrap();
        assert_eq!((a.n, a.k), (8, 2));
        assert!(a.hx.mat_mul(&a.hz.transpose()).unwrap().is_zero());
        assert_eq!(a.k, a.n - a.hx.rank() - a.hz.rank());
        assert_eq!(a, build_bicycle(8, 2, 2, 3).unwrap());
        let r = build_bicycle_with(8, 2, 2, 3, RowDeletion::Random).unwrap();
        assert_eq!(r.k, 2);
    }

    #[test]
    fn bicycle_parameter_errors() {
        assert!(matches!(build_bicycle(7, 2, 2, 0), Err(CodeError::InvalidParameters(_))));
        assert!(matches!(build_bicycle(8, 3, 2, 0), Err(CodeError::InvalidParameters(_))));
        assert!(matches!(build_bicycle(8, 2, 5, 0), Err(CodeError::InvalidParameters(_))));
        // k = 0 needs a full-rank H_o, which a weight-2 circulant never has.
        assert!(matches!(
            build_bicycle(8, 0, 2, 0),
            Err(CodeError::BicycleExhausted { attempts: BICYCLE_MAX_ATTEMPTS, .. })
        ));
    }

    #[test]
    fn weight_bounds_hold() {
        let (c1, c2) = bch_seed_codes();
        let code = build_hgp(&c1, &c2).unwrap();
        for m in [&code.hx, &code.hz] {
            assert!((0..m.rows()).all(|r| m.row_weight(r) <= code.row_bound));
            assert!(m.column_weights().iter().all(|&w| w <= code.col_bound));
        }
    }

    #[test]
    fn null_space_is_orthogonal() {
        let (_, c2) = bch_seed_codes();
        let basis = null_space(&c2.h);
        assert_eq!(basis.len(), 7);
        for b in &basis {
            assert!(c2.h.mat_vec(b).unwrap().is_zero());
        }
    }
}
