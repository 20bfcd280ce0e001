//! Paired binary symmetric channel, syndromes and training/test datasets.

use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codes::CssCode;
use crate::gf2::BinVector;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChannelError {
    #[error("physical error rate {0} outside the allowed range")]
    InvalidProbability(f64),
    #[error("expected a vector of length {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("training set needs at least {min} entries, got {got}")]
    TooFewEntries { min: usize, got: usize },
    #[error("dataset entry {index} has a syndrome that does not match its error")]
    InconsistentEntry { index: usize },
    #[error("dataset was generated for code {expected:#018x}, not {got:#018x}")]
    CodeMismatch { expected: u64, got: u64 },
}

/// Flip probability shared by the X and Z channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    p_f: f64,
}

impl ChannelParams {
    /// Accepts `0 <= p_f < 0.5`; `p_f = 0` is the noiseless channel.
    pub fn new(p_f: f64) -> Result<Self, ChannelError> {
        if !(0.0..0.5).contains(&p_f) {
            return Err(ChannelError::InvalidProbability(p_f));
        }
        Ok(Self { p_f })
    }

    #[inline]
    pub fn p_f(&self) -> f64 {
        self.p_f
    }
}

/// Prior log-likelihood ratio `ln((1 - p)/p)` of every bit.
pub fn prior_llr(params: ChannelParams) -> Result<f64, ChannelError> {
    let p = params.p_f;
    if !(p > 0.0 && p < 0.5) {
        return Err(ChannelError::InvalidProbability(p));
    }
    Ok(libm::log((1.0 - p) / p))
}

/// A Pauli error in binary symplectic form `(x | z)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ErrorVector(pub BinVector);

impl ErrorVector {
    pub fn zeros(n: usize) -> Self {
        Self(BinVector::zeros(2 * n))
    }

    /// Number of qubits.
    pub fn qubits(&self) -> usize {
        self.0.len() / 2
    }

    pub fn x_part(&self) -> BinVector {
        self.0.slice(0, self.qubits())
    }

    pub fn z_part(&self) -> BinVector {
        self.0.slice(self.qubits(), self.qubits())
    }

    pub fn from_parts(x: &BinVector, z: &BinVector) -> Self {
        assert_eq!(x.len(), z.len(), "x and z parts differ in length");
        Self(x.concat(z))
    }

    pub fn bits(&self) -> &BinVector {
        &self.0
    }
}

/// Syndrome `(s_x | s_z) = (Hz x | Hx z)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Syndrome(pub BinVector);

impl Syndrome {
    pub fn bits(&self) -> &BinVector {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Draws each of the `2n` bits independently with probability `p_f`.
pub fn sample_error<R: Rng + ?Sized>(code: &CssCode, params: ChannelParams, rng: &mut R) -> ErrorVector {
    let p = params.p_f;
    ErrorVector(BinVector::from_bools(
        (0..2 * code.n).map(|_| rng.random::<f64>() < p),
    ))
}

pub fn syndrome(code: &CssCode, e: &ErrorVector) -> Result<Syndrome, ChannelError> {
    if e.0.len() != 2 * code.n {
        return Err(ChannelError::LengthMismatch {
            expected: 2 * code.n,
            got: e.0.len(),
        });
    }
    let sx = code.hz.mat_vec(&e.x_part()).expect("length checked");
    let sz = code.hx.mat_vec(&e.z_part()).expect("length checked");
    Ok(Syndrome(sx.concat(&sz)))
}

/// Which generation procedure produced a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    /// Forced zero and unit errors, then truncated-binomial weights.
    Train,
    /// Plain channel draws.
    Test,
}

impl Recipe {
    pub fn as_str(self) -> &'static str {
        match self {
            Recipe::Train => "train",
            Recipe::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub code_name: alloc::string::String,
    pub code_hash: u64,
    pub p_f: f64,
    pub seed: u64,
    pub recipe: Recipe,
}

/// Syndrome/error pairs for one code.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub entries: Vec<(Syndrome, ErrorVector)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks the code fingerprint and every `syndrome(e) == s`.
    pub fn verify(&self, code: &CssCode) -> Result<(), ChannelError> {
        let got = code.fingerprint();
        if self.meta.code_hash != got {
            return Err(ChannelError::CodeMismatch {
                expected: self.meta.code_hash,
                got,
            });
        }
        for (index, (s, e)) in self.entries.iter().enumerate() {
            if syndrome(code, e)? != *s {
                return Err(ChannelError::InconsistentEntry { index });
            }
        }
        Ok(())
    }
}

/// Binomial(N, p) restricted to `w >= 2`, sampled by inverse CDF.
#[derive(Debug, Clone)]
pub struct TruncatedBinomial {
    /// `cdf[i]` is `P(W <= i + 2)`.
    cdf: Vec<f64>,
}

impl TruncatedBinomial {
    pub fn new(trials: usize, p: f64) -> Result<Self, ChannelError> {
        if !(p > 0.0 && p < 1.0) || trials < 2 {
            return Err(ChannelError::InvalidProbability(p));
        }
        let pmf = Self::pmf_unnormalized(trials, p);
        let total: f64 = pmf.iter().sum();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = pmf
            .iter()
            .map(|&q| {
                acc += q / total;
                acc
            })
            .collect();
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Ok(Self { cdf })
    }

    /// Renormalized probabilities for `w = 2..=trials`.
    pub fn pmf(trials: usize, p: f64) -> Vec<f64> {
        let pmf = Self::pmf_unnormalized(trials, p);
        let total: f64 = pmf.iter().sum();
        pmf.into_iter().map(|q| q / total).collect()
    }

    fn pmf_unnormalized(trials: usize, p: f64) -> Vec<f64> {
        let n = trials as f64;
        let ratio = p / (1.0 - p);
        // log of C(n,2) p^2 (1-p)^(n-2), then the recurrence upwards.
        let mut log_q = libm::log(n * (n - 1.0) / 2.0) + 2.0 * libm::log(p) + (n - 2.0) * libm::log1p(-p);
        let mut out = Vec::with_capacity(trials - 1);
        for w in 2..=trials {
            out.push(libm::exp(log_q));
            let wf = w as f64;
            log_q += libm::log((n - wf) / (wf + 1.0) * ratio);
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c <= u);
        i.min(self.cdf.len() - 1) + 2
    }
}

/// Training set: zero error, the `2n` unit errors, then weight-conditioned draws.
pub fn gen_training_set(
    code: &CssCode,
    params: ChannelParams,
    count: usize,
    seed: u64,
) -> Result<Dataset, ChannelError> {
    let bits = 2 * code.n;
    if count < bits + 1 {
        return Err(ChannelError::TooFewEntries {
            min: bits + 1,
            got: count,
        });
    }
    let weights = TruncatedBinomial::new(bits, params.p_f)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(count);
    let push = |e: ErrorVector, entries: &mut Vec<(Syndrome, ErrorVector)>| {
        let s = syndrome(code, &e).expect("length is 2n");
        entries.push((s, e));
    };
    push(ErrorVector::zeros(code.n), &mut entries);
    for j in 0..bits {
        push(ErrorVector(BinVector::unit(bits, j)), &mut entries);
    }
    while entries.len() < count {
        let w = weights.sample(&mut rng);
        let mut v = BinVector::zeros(bits);
        for i in index::sample(&mut rng, bits, w) {
            v.set(i, true);
        }
        push(ErrorVector(v), &mut entries);
    }
    Ok(Dataset {
        meta: DatasetMeta {
            code_name: code.name.clone(),
            code_hash: code.fingerprint(),
            p_f: params.p_f,
            seed,
            recipe: Recipe::Train,
        },
        entries,
    })
}

/// Lazily produced iid channel draws paired with their syndromes.
pub struct TestStream<'a> {
    code: &'a CssCode,
    params: ChannelParams,
    rng: ChaCha8Rng,
    remaining: usize,
}

impl Iterator for TestStream<'_> {
    type Item = (Syndrome, ErrorVector);

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let e = sample_error(self.code, self.params, &mut self.rng);
        let s = syndrome(self.code, &e).expect("length is 2n");
        Some((s, e))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for TestStream<'_> {}

pub fn gen_test_stream(code: &CssCode, params: ChannelParams, count: usize, seed: u64) -> TestStream<'_> {
    TestStream {
        code,
        params,
        rng: ChaCha8Rng::seed_from_u64(seed),
        remaining: count,
    }
}
