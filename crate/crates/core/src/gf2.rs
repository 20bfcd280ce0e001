//! Bit-packed dense linear algebra over GF(2).
//!
//! Matrices are stored row-major with each row padded to a whole number of
//! 64-bit words. Bits past the last column are always zero, so word-level
//! XOR and popcount can be used without masking on every access.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

const WORD_BITS: usize = 64;

#[inline]
fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD_BITS)
}

#[inline]
fn tail_mask(bits: usize) -> u64 {
    match bits % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Gf2Error {
    #[error("{op}: dimension mismatch ({left_rows}x{left_cols} vs {right_rows}x{right_cols})")]
    DimensionMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("column order is not a permutation of 0..{cols}")]
    InvalidPermutation { cols: usize },
    #[error("right-hand side is not in the span of the selected columns")]
    NotInSpan,
    #[error("circulant requires a non-empty vector")]
    EmptyVector,
}

fn mismatch(op: &'static str, l: (usize, usize), r: (usize, usize)) -> Gf2Error {
    Gf2Error::DimensionMismatch {
        op,
        left_rows: l.0,
        left_cols: l.1,
        right_rows: r.0,
        right_cols: r.1,
    }
}

/// A packed binary vector.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinVector {
    len: usize,
    words: Vec<u64>,
}

impl BinVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; words_for(len)],
        }
    }

    pub fn unit(len: usize, index: usize) -> Self {
        let mut v = Self::zeros(len);
        v.set(index, true);
        v
    }

    /// Builds a vector from 0/1 bytes; any nonzero byte is a one.
    pub fn from_bits(bits: &[u8]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b != 0 {
                v.set(i, true);
            }
        }
        v
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for b in bits {
            if len % WORD_BITS == 0 {
                words.push(0);
            }
            if b {
                words[len / WORD_BITS] |= 1 << (len % WORD_BITS);
            }
            len += 1;
        }
        Self { len, words }
    }

    /// Wraps raw words, clearing any bits past `len`.
    pub fn from_words(len: usize, mut words: Vec<u64>) -> Self {
        words.resize(words_for(len), 0);
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(len);
        }
        Self { len, words }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i / WORD_BITS] ^= 1u64 << (i % WORD_BITS);
    }

    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// In-place XOR. Panics on length mismatch.
    pub fn xor_assign(&mut self, other: &BinVector) {
        assert_eq!(self.len, other.len, "xor of vectors with different lengths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn xor(&self, other: &BinVector) -> BinVector {
        let mut out = self.clone();
        out.xor_assign(other);
        out
    }

    /// Parity of the bitwise AND.
    pub fn dot(&self, other: &BinVector) -> bool {
        assert_eq!(self.len, other.len, "dot of vectors with different lengths");
        let ones: u32 = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum();
        ones & 1 == 1
    }

    /// Indices of set bits in increasing order.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            core::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let t = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * WORD_BITS + t)
                }
            })
        })
    }

    pub fn to_bits(&self) -> Vec<u8> {
        (0..self.len).map(|i| self.get(i) as u8).collect()
    }

    pub fn concat(&self, other: &BinVector) -> BinVector {
        let mut out = BinVector::zeros(self.len + other.len);
        for i in self.iter_ones() {
            out.set(i, true);
        }
        for i in other.iter_ones() {
            out.set(self.len + i, true);
        }
        out
    }

    pub fn slice(&self, start: usize, len: usize) -> BinVector {
        assert!(start + len <= self.len, "slice out of range");
        let mut out = BinVector::zeros(len);
        for i in self.iter_ones().filter(|&i| i >= start && i < start + len) {
            out.set(i - start, true);
        }
        out
    }
}

impl fmt::Debug for BinVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinVector(")?;
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        write!(f, ")")
    }
}

/// A packed row-major binary matrix.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<u64>,
}

impl BinMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = words_for(cols);
        Self {
            rows,
            cols,
            stride,
            data: vec![0; rows * stride],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                if f(r, c) {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    /// Builds a matrix from rows of 0/1 bytes. Panics if rows are ragged.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = Self::zeros(rows.len(), cols);
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            assert_eq!(row.len(), cols, "ragged rows");
            for (c, &b) in row.iter().enumerate() {
                if b != 0 {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    pub fn from_row_vectors(cols: usize, rows: &[BinVector]) -> Self {
        let mut m = Self::zeros(rows.len(), cols);
        for (r, v) in rows.iter().enumerate() {
            assert_eq!(v.len(), cols, "row length mismatch");
            m.row_words_mut(r).copy_from_slice(v.words());
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of range");
        (self.data[r * self.stride + c / WORD_BITS] >> (c % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of range");
        let w = &mut self.data[r * self.stride + c / WORD_BITS];
        let mask = 1u64 << (c % WORD_BITS);
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    #[inline]
    pub fn row_words(&self, r: usize) -> &[u64] {
        &self.data[r * self.stride..(r + 1) * self.stride]
    }

    #[inline]
    fn row_words_mut(&mut self, r: usize) -> &mut [u64] {
        &mut self.data[r * self.stride..(r + 1) * self.stride]
    }

    pub fn row(&self, r: usize) -> BinVector {
        BinVector::from_words(self.cols, self.row_words(r).to_vec())
    }

    pub fn column(&self, c: usize) -> BinVector {
        BinVector::from_bools((0..self.rows).map(|r| self.get(r, c)))
    }

    /// Column indices of the ones in row `r`, increasing.
    pub fn row_support(&self, r: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for (wi, &w) in self.row_words(r).iter().enumerate() {
            let mut w = w;
            while w != 0 {
                out.push(wi * WORD_BITS + w.trailing_zeros() as usize);
                w &= w - 1;
            }
        }
        out
    }

    fn xor_row_into(&mut self, src: usize, dst: usize) {
        debug_assert_ne!(src, dst);
        let s = self.stride;
        let (a, b) = if src < dst {
            let (lo, hi) = self.data.split_at_mut(dst * s);
            (&lo[src * s..src * s + s], &mut hi[..s])
        } else {
            let (lo, hi) = self.data.split_at_mut(src * s);
            (&hi[..s] as &[u64], &mut lo[dst * s..dst * s + s])
        };
        for (d, x) in b.iter_mut().zip(a) {
            *d ^= x;
        }
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let s = self.stride;
        for w in 0..s {
            self.data.swap(a * s + w, b * s + w);
        }
    }

    pub fn row_weight(&self, r: usize) -> usize {
        self.row_words(r).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn column_weights(&self) -> Vec<usize> {
        let mut w = vec![0; self.cols];
        for r in 0..self.rows {
            for c in self.row_support(r) {
                w[c] += 1;
            }
        }
        w
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&w| w == 0)
    }

    pub fn transpose(&self) -> BinMatrix {
        let mut t = BinMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in self.row_support(r) {
                t.set(c, r, true);
            }
        }
        t
    }

    /// Product over GF(2).
    pub fn mat_mul(&self, rhs: &BinMatrix) -> Result<BinMatrix, Gf2Error> {
        if self.cols != rhs.rows {
            return Err(mismatch("mat_mul", self.shape(), rhs.shape()));
        }
        let mut out = BinMatrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in self.row_support(r) {
                let src = rhs.row_words(k);
                let dst = &mut out.data[r * out.stride..(r + 1) * out.stride];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d ^= s;
                }
            }
        }
        Ok(out)
    }

    pub fn mat_vec(&self, x: &BinVector) -> Result<BinVector, Gf2Error> {
        if self.cols != x.len() {
            return Err(mismatch("mat_vec", self.shape(), (x.len(), 1)));
        }
        Ok(BinVector::from_bools((0..self.rows).map(|r| {
            let ones: u32 = self
                .row_words(r)
                .iter()
                .zip(x.words())
                .map(|(a, b)| (a & b).count_ones())
                .sum();
            ones & 1 == 1
        })))
    }

    /// Kronecker product with `self` as the block-major (outer) operand.
    pub fn kron(&self, rhs: &BinMatrix) -> BinMatrix {
        let mut out = BinMatrix::zeros(self.rows * rhs.rows, self.cols * rhs.cols);
        for i in 0..self.rows {
            for j in self.row_support(i) {
                for k in 0..rhs.rows {
                    for l in rhs.row_support(k) {
                        out.set(i * rhs.rows + k, j * rhs.cols + l, true);
                    }
                }
            }
        }
        out
    }

    /// Horizontal concatenation `[self | rhs]`.
    pub fn hstack(&self, rhs: &BinMatrix) -> Result<BinMatrix, Gf2Error> {
        if self.rows != rhs.rows {
            return Err(mismatch("hstack", self.shape(), rhs.shape()));
        }
        let mut out = BinMatrix::zeros(self.rows, self.cols + rhs.cols);
        for r in 0..self.rows {
            for c in self.row_support(r) {
                out.set(r, c, true);
            }
            for c in rhs.row_support(r) {
                out.set(r, self.cols + c, true);
            }
        }
        Ok(out)
    }

    /// Vertical concatenation.
    pub fn vstack(&self, rhs: &BinMatrix) -> Result<BinMatrix, Gf2Error> {
        if self.cols != rhs.cols {
            return Err(mismatch("vstack", self.shape(), rhs.shape()));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&rhs.data);
        Ok(BinMatrix {
            rows: self.rows + rhs.rows,
            cols: self.cols,
            stride: self.stride,
            data,
        })
    }

    /// `[[self, 0], [0, rhs]]`.
    pub fn block_diag(&self, rhs: &BinMatrix) -> BinMatrix {
        let mut out = BinMatrix::zeros(self.rows + rhs.rows, self.cols + rhs.cols);
        for r in 0..self.rows {
            for c in self.row_support(r) {
                out.set(r, c, true);
            }
        }
        for r in 0..rhs.rows {
            for c in rhs.row_support(r) {
                out.set(self.rows + r, self.cols + c, true);
            }
        }
        out
    }

    /// Keeps the listed rows, in the listed order.
    pub fn select_rows(&self, rows: &[usize]) -> BinMatrix {
        let mut out = BinMatrix::zeros(rows.len(), self.cols);
        for (i, &r) in rows.iter().enumerate() {
            out.row_words_mut(i).copy_from_slice(self.row_words(r));
        }
        out
    }

    /// Keeps the listed columns, in the listed order.
    pub fn select_columns(&self, cols: &[usize]) -> BinMatrix {
        let mut out = BinMatrix::zeros(self.rows, cols.len());
        for r in 0..self.rows {
            for (i, &c) in cols.iter().enumerate() {
                if self.get(r, c) {
                    out.set(r, i, true);
                }
            }
        }
        out
    }

    pub fn rank(&self) -> usize {
        let order: Vec<usize> = (0..self.cols).collect();
        let mut m = self.clone();
        m.eliminate(&order).len()
    }

    /// Gauss-Jordan elimination over the columns in `order`, in place.
    ///
    /// `order` may be any list of distinct columns; columns not listed are
    /// carried along but never chosen as pivots. Returns pivot columns in
    /// visit order; pivot `i` sits in row `i`.
    pub(crate) fn eliminate(&mut self, order: &[usize]) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut row = 0;
        for &col in order {
            if row == self.rows {
                break;
            }
            let word = col / WORD_BITS;
            let mask = 1u64 << (col % WORD_BITS);
            let Some(p) = (row..self.rows).find(|&r| self.data[r * self.stride + word] & mask != 0)
            else {
                continue;
            };
            self.swap_rows(p, row);
            for r in 0..self.rows {
                if r != row && self.data[r * self.stride + word] & mask != 0 {
                    self.xor_row_into(row, r);
                }
            }
            pivots.push(col);
            row += 1;
        }
        pivots
    }

    /// Reduced row echelon form visiting columns in `column_order`.
    pub fn rref(&self, column_order: &[usize]) -> Result<Echelon, Gf2Error> {
        check_permutation(column_order, self.cols)?;
        let mut reduced = self.clone();
        let pivots = reduced.eliminate(column_order);
        let rank = pivots.len();
        Ok(Echelon {
            reduced,
            pivots,
            rank,
        })
    }

    /// Finds `x` supported on `pivots` with `self · x = b`.
    pub fn solve_with_pivots(&self, b: &BinVector, pivots: &[usize]) -> Result<BinVector, Gf2Error> {
        if b.len() != self.rows {
            return Err(mismatch("solve_with_pivots", self.shape(), (b.len(), 1)));
        }
        if let Some(&bad) = pivots.iter().find(|&&p| p >= self.cols) {
            return Err(mismatch("solve_with_pivots", self.shape(), (bad, 1)));
        }
        // [A_P | b], eliminated over the pivot block only.
        let k = pivots.len();
        let mut aug = BinMatrix::zeros(self.rows, k + 1);
        for r in 0..self.rows {
            for (i, &p) in pivots.iter().enumerate() {
                if self.get(r, p) {
                    aug.set(r, i, true);
                }
            }
            if b.get(r) {
                aug.set(r, k, true);
            }
        }
        let order: Vec<usize> = (0..k).collect();
        let found = aug.eliminate(&order);
        if (found.len()..aug.rows).any(|r| aug.get(r, k)) {
            return Err(Gf2Error::NotInSpan);
        }
        let mut x = BinVector::zeros(self.cols);
        for (row, &local) in found.iter().enumerate() {
            if aug.get(row, k) {
                x.set(pivots[local], true);
            }
        }
        Ok(x)
    }

    /// Whether `x` lies in the row space.
    pub fn in_rowspace(&self, x: &BinVector) -> Result<bool, Gf2Error> {
        if x.len() != self.cols {
            return Err(mismatch("in_rowspace", self.shape(), (1, x.len())));
        }
        Ok(RowBasis::new(self).contains(x))
    }

    /// Square circulant whose row `i` is `v` cyclically shifted right by `i`.
    pub fn circulant(v: &BinVector) -> Result<BinMatrix, Gf2Error> {
        let n = v.len();
        if n == 0 {
            return Err(Gf2Error::EmptyVector);
        }
        let mut m = BinMatrix::zeros(n, n);
        for i in 0..n {
            for j in v.iter_ones() {
                m.set(i, (j + i) % n, true);
            }
        }
        Ok(m)
    }
}

impl fmt::Debug for BinMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BinMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            f.write_str("  ")?;
            for c in 0..self.cols {
                f.write_str(if self.get(r, c) { "1" } else { "0" })?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

fn check_permutation(order: &[usize], cols: usize) -> Result<(), Gf2Error> {
    if order.len() != cols {
        return Err(Gf2Error::InvalidPermutation { cols });
    }
    let mut seen = vec![false; cols];
    for &c in order {
        if c >= cols || core::mem::replace(&mut seen[c], true) {
            return Err(Gf2Error::InvalidPermutation { cols });
        }
    }
    Ok(())
}

/// Output of [`BinMatrix::rref`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Echelon {
    pub reduced: BinMatrix,
    /// Pivot columns in visit order; pivot `i` is the leading one of row `i`.
    pub pivots: Vec<usize>,
    pub rank: usize,
}

/// Reduced basis of a row space, for repeated membership queries.
#[derive(Debug, Clone)]
pub struct RowBasis {
    rows: Vec<BinVector>,
    pivots: Vec<usize>,
    cols: usize,
}

impl RowBasis {
    pub fn new(m: &BinMatrix) -> Self {
        let mut reduced = m.clone();
        let order: Vec<usize> = (0..m.cols).collect();
        let pivots = reduced.eliminate(&order);
        let rows = (0..pivots.len()).map(|r| reduced.row(r)).collect();
        Self {
            rows,
            pivots,
            cols: m.cols,
        }
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Panics if `x.len()` differs from the column count.
    pub fn contains(&self, x: &BinVector) -> bool {
        assert_eq!(x.len(), self.cols, "row basis membership length mismatch");
        let mut rem = x.clone();
        for (row, &p) in self.rows.iter().zip(&self.pivots) {
            if rem.get(p) {
                rem.xor_assign(row);
            }
        }
        rem.is_zero()
    }
}
