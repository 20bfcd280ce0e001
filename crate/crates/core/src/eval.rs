//! Logical-success test and Monte Carlo logical error rates.
//!
//! A decode succeeds when the residual `e ⊕ ê` is a stabilizer: it has zero
//! syndrome and each half lies in the row space of the matching check
//! matrix. A residual with zero syndrome outside the stabilizer group is a
//! logical error.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bp::{bp_decode, BpConfig, BpError};
use crate::channel::{prior_llr, sample_error, syndrome, ChannelError, ChannelParams, ErrorVector, Syndrome};
use crate::codes::CssCode;
use crate::gf2::RowBasis;
use crate::gnn::{gnn_decode_batch, GnnError, GnnModel};
use crate::nbp::{nbp_decode, NbpError, NbpModel};
use crate::osd::{bp_osd_decode, OsdConfig, OsdError};
use crate::tanner::TannerGraph;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("error vectors have lengths {left} and {right}, expected {expected}")]
    LengthMismatch { left: usize, right: usize, expected: usize },
    #[error("need 0 <= failures <= trials and trials >= 1, got {failures}/{trials}")]
    InvalidCounts { failures: u64, trials: u64 },
    #[error("confidence {0} must lie strictly between 0 and 1")]
    InvalidConfidence(f64),
    #[error("decoder does not fit this code: {0}")]
    DecoderMismatch(alloc::string::String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Bp(#[from] BpError),
    #[error(transparent)]
    Osd(#[from] OsdError),
    #[error(transparent)]
    Nbp(#[from] NbpError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
}

/// Row-space bases of `Hx` and `Hz` for the stabilizer test.
#[derive(Debug, Clone)]
pub struct LogicalJudge {
    n: usize,
    hx: RowBasis,
    hz: RowBasis,
    graph: TannerGraph,
}

impl LogicalJudge {
    pub fn new(code: &CssCode) -> Self {
        Self {
            n: code.n,
            hx: RowBasis::new(&code.hx),
            hz: RowBasis::new(&code.hz),
            graph: code.tanner_graph(),
        }
    }

    /// `rank(Hx) + rank(Hz)`, which is `n - k`.
    pub fn rank(&self) -> usize {
        self.hx.rank() + self.hz.rank()
    }

    /// Whether the residual `e ⊕ ê` is a stabilizer.
    pub fn is_logical_success(&self, e: &ErrorVector, e_hat: &ErrorVector) -> Result<bool, EvalError> {
        if e.0.len() != 2 * self.n || e_hat.0.len() != 2 * self.n {
            return Err(EvalError::LengthMismatch {
                left: e.0.len(),
                right: e_hat.0.len(),
                expected: 2 * self.n,
            });
        }
        let total = e.0.xor(&e_hat.0);
        let zero = crate::gf2::BinVector::zeros(self.graph.check_count);
        if !crate::bp::satisfies_syndrome(&self.graph, &total, &zero) {
            return Ok(false);
        }
        let t = ErrorVector(total);
        Ok(self.hx.contains(&t.x_part()) && self.hz.contains(&t.z_part()))
    }
}

/// Two-sided standard-normal quantile for `confidence`, by bisection on erf.
fn normal_quantile(confidence: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if libm::erf(mid / core::f64::consts::SQRT_2) < confidence {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(failures: u64, trials: u64, confidence: f64) -> Result<(f64, f64), EvalError> {
    if trials == 0 || failures > trials {
        return Err(EvalError::InvalidCounts { failures, trials });
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(EvalError::InvalidConfidence(confidence));
    }
    let z = normal_quantile(confidence);
    let n = trials as f64;
    let p = failures as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * libm::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    let low = if failures == 0 { 0.0 } else { (centre - half).max(0.0) };
    let high = if failures == trials { 1.0 } else { (centre + half).min(1.0) };
    Ok((low, high))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub p_f: f64,
    pub trials: u64,
    pub failures: u64,
    pub ler: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl CurvePoint {
    /// Tally with a 95% Wilson interval.
    pub fn new(p_f: f64, failures: u64, trials: u64) -> Result<Self, EvalError> {
        let (ci_low, ci_high) = wilson_interval(failures, trials, 0.95)?;
        Ok(Self {
            p_f,
            trials,
            failures,
            ler: failures as f64 / trials as f64,
            ci_low,
            ci_high,
        })
    }

    /// Whether the two 95% intervals are disjoint with `self` below.
    pub fn separated_below(&self, other: &CurvePoint) -> bool {
        self.ci_high < other.ci_low
    }
}

/// A syndrome decoder for one code. Implementations must be deterministic.
pub trait Decoder: Sync {
    fn name(&self) -> &str;

    fn decode(&self, s: &Syndrome, channel: ChannelParams) -> Result<ErrorVector, EvalError>;

    fn decode_batch(&self, syndromes: &[&Syndrome], channel: ChannelParams) -> Result<Vec<ErrorVector>, EvalError> {
        syndromes.iter().map(|s| self.decode(s, channel)).collect()
    }

    /// Preferred number of syndromes per `decode_batch` call.
    fn batch_hint(&self) -> usize {
        1
    }
}

/// Always answers `ê = 0`.
pub struct ZeroDecoder {
    pub n: usize,
}

impl Decoder for ZeroDecoder {
    fn name(&self) -> &str {
        "zero"
    }

    fn decode(&self, _: &Syndrome, _: ChannelParams) -> Result<ErrorVector, EvalError> {
        Ok(ErrorVector::zeros(self.n))
    }
}

pub struct BpDecoder {
    pub graph: TannerGraph,
    pub config: BpConfig,
}

impl BpDecoder {
    pub fn new(code: &CssCode, config: BpConfig) -> Self {
        Self {
            graph: code.tanner_graph(),
            config,
        }
    }
}

impl Decoder for BpDecoder {
    fn name(&self) -> &str {
        "bp"
    }

    fn decode(&self, s: &Syndrome, channel: ChannelParams) -> Result<ErrorVector, EvalError> {
        Ok(bp_decode(&self.graph, s, prior_llr(channel)?, &self.config)?.e_hat)
    }
}

pub struct BpOsdDecoder {
    pub code: CssCode,
    pub graph: TannerGraph,
    pub bp: BpConfig,
    pub osd: OsdConfig,
}

impl BpOsdDecoder {
    pub fn new(code: &CssCode, bp: BpConfig, osd: OsdConfig) -> Self {
        Self {
            code: code.clone(),
            graph: code.tanner_graph(),
            bp,
            osd,
        }
    }
}

impl Decoder for BpOsdDecoder {
    fn name(&self) -> &str {
        "bp-osd"
    }

    fn decode(&self, s: &Syndrome, channel: ChannelParams) -> Result<ErrorVector, EvalError> {
        Ok(bp_osd_decode(&self.code, &self.graph, s, prior_llr(channel)?, &self.bp, &self.osd)?)
    }
}

pub struct NbpDecoder {
    pub graph: TannerGraph,
    pub model: NbpModel,
}

impl NbpDecoder {
    pub fn new(code: &CssCode, model: NbpModel) -> Result<Self, EvalError> {
        let graph = code.tanner_graph();
        if model.var_count != graph.var_count || model.edge_count != graph.edge_count() {
            return Err(EvalError::DecoderMismatch("neural BP model built for another graph".into()));
        }
        Ok(Self { graph, model })
    }
}

impl Decoder for NbpDecoder {
    fn name(&self) -> &str {
        "nbp"
    }

    fn decode(&self, s: &Syndrome, channel: ChannelParams) -> Result<ErrorVector, EvalError> {
        Ok(nbp_decode(&self.graph, s, prior_llr(channel)?, &self.model)?.e_hat)
    }
}

/// GNN decoding with batched forward passes. The output for the all-zero
/// syndrome is computed once up front and reused.
pub struct GnnDecoder {
    pub graph: TannerGraph,
    pub model: GnnModel,
    pub batch: usize,
    zero: (Syndrome, ErrorVector),
}

impl GnnDecoder {
    pub fn new(code: &CssCode, model: GnnModel, batch: usize) -> Result<Self, EvalError> {
        let graph = code.tanner_graph();
        let s0 = Syndrome(crate::gf2::BinVector::zeros(graph.check_count));
        let mut out = gnn_decode_batch(&graph, &[&s0], &model)?;
        let e0 = out.pop().expect("one output").e_hat;
        Ok(Self {
            graph,
            model,
            batch: batch.max(1),
            zero: (s0, e0),
        })
    }
}

impl Decoder for GnnDecoder {
    fn name(&self) -> &str {
        "gnn"
    }

    fn decode(&self, s: &Syndrome, channel: ChannelParams) -> Result<ErrorVector, EvalError> {
        let mut out = self.decode_batch(&[s], channel)?;
        Ok(out.pop().expect("one output"))
    }

    fn decode_batch(&self, syndromes: &[&Syndrome], _: ChannelParams) -> Result<Vec<ErrorVector>, EvalError> {
        let mut result: Vec<Option<ErrorVector>> = syndromes
            .iter()
            .map(|s| if s.0.is_zero() && s.len() == self.zero.0.len() { Some(self.zero.1.clone()) } else { None })
            .collect();
        let pending: Vec<usize> = (0..syndromes.len()).filter(|&i| result[i].is_none()).collect();
        for part in pending.chunks(self.batch) {
            let batch: Vec<&Syndrome> = part.iter().map(|&i| syndromes[i]).collect();
            let decoded = gnn_decode_batch(&self.graph, &batch, &self.model)?;
            for (&i, d) in part.iter().zip(decoded) {
                result[i] = Some(d.e_hat);
            }
        }
        Ok(result.into_iter().map(|e| e.expect("every slot decoded")).collect())
    }

    fn batch_hint(&self) -> usize {
        self.batch
    }
}

impl<D: Decoder + ?Sized> Decoder for Box<D> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn decode(&self, s: &Syndrome, channel: ChannelParams) -> Result<ErrorVector, EvalError> {
        (**self).decode(s, channel)
    }

    fn decode_batch(&self, syndromes: &[&Syndrome], channel: ChannelParams) -> Result<Vec<ErrorVector>, EvalError> {
        (**self).decode_batch(syndromes, channel)
    }

    fn batch_hint(&self) -> usize {
        (**self).batch_hint()
    }
}

/// Generator for trial `trial` of sweep point `point`.
///
/// Each trial owns a ChaCha stream, so results do not depend on how trials
/// are split between workers.
pub fn trial_rng(seed: u64, point: usize, trial: u64) -> ChaCha8Rng {
    let key = seed ^ (point as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(trial);
    rng
}

/// Failures among the trials in `trials` at one sweep point.
pub fn count_failures(
    code: &CssCode,
    judge: &LogicalJudge,
    decoder: &dyn Decoder,
    channel: ChannelParams,
    seed: u64,
    point: usize,
    trials: Range<u64>,
) -> Result<u64, EvalError> {
    let batch = decoder.batch_hint().max(1) as u64;
    let mut failures = 0;
    let mut start = trials.start;
    while start < trials.end {
        let end = (start + batch).min(trials.end);
        let errors: Vec<ErrorVector> = (start..end)
            .map(|t| sample_error(code, channel, &mut trial_rng(seed, point, t)))
            .collect();
        let syndromes = errors.iter().map(|e| syndrome(code, e)).collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&Syndrome> = syndromes.iter().collect();
        let decoded = decoder.decode_batch(&refs, channel)?;
        for (e, e_hat) in errors.iter().zip(&decoded) {
            if !judge.is_logical_success(e, e_hat)? {
                failures += 1;
            }
        }
        start = end;
    }
    Ok(failures)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub trials: u64,
    pub seed: u64,
    /// Stop a point early once this many failures are seen. Checked only at
    /// block boundaries so the outcome stays independent of parallelism.
    pub max_failures: Option<u64>,
    pub block: u64,
}

impl SweepConfig {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self {
            trials,
            seed,
            max_failures: None,
            block: 1000,
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.trials == 0 {
            return Err(EvalError::InvalidCounts {
                failures: 0,
                trials: 0,
            });
        }
        Ok(())
    }

    /// Trial blocks of one point, in order.
    pub fn blocks(&self) -> impl Iterator<Item = Range<u64>> + '_ {
        let block = self.block.max(1);
        (0..self.trials.div_ceil(block)).map(move |b| b * block..((b + 1) * block).min(self.trials))
    }
}

/// Single-threaded sweep over `p_list`.
pub fn run_sweep(
    code: &CssCode,
    decoder: &dyn Decoder,
    p_list: &[f64],
    config: &SweepConfig,
) -> Result<Vec<CurvePoint>, EvalError> {
    config.validate()?;
    let judge = LogicalJudge::new(code);
    p_list
        .iter()
        .enumerate()
        .map(|(point, &p)| {
            let channel = ChannelParams::new(p)?;
            let (mut failures, mut done) = (0, 0);
            for block in config.blocks() {
                done = block.end;
                failures += count_failures(code, &judge, decoder, channel, config.seed, point, block)?;
                if config.max_failures.is_some_and(|m| failures >= m) {
                    break;
                }
            }
            CurvePoint::new(p, failures, done)
        })
        .collect()
}
