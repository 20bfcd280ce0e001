//! Multi-threaded logical-error sweeps.
//!
//! Trials are cut into the fixed blocks of [`SweepConfig::blocks`]. Blocks
//! run in parallel waves, then are tallied in block order, so failure counts
//! and early stops match the single-threaded sweep for any worker count.

use rayon::prelude::*;

use qldpc_core::channel::ChannelParams;
use qldpc_core::eval::{count_failures, CurvePoint, Decoder, EvalError, LogicalJudge, SweepConfig};
use qldpc_core::CssCode;

/// Environment variable consulted for the default worker count.
pub const WORKERS_ENV: &str = "QLDPC_WORKERS";

pub fn available_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn run_sweep_parallel(
    code: &CssCode,
    decoder: &dyn Decoder,
    p_list: &[f64],
    config: &SweepConfig,
    workers: usize,
    mut on_point: impl FnMut(&CurvePoint),
) -> Result<Vec<CurvePoint>, EvalError> {
    config.validate()?;
    let workers = workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| EvalError::DecoderMismatch(format!("cannot start worker pool: {e}")))?;
    let judge = LogicalJudge::new(code);
    let mut points = Vec::with_capacity(p_list.len());
    for (point, &p) in p_list.iter().enumerate() {
        let channel = ChannelParams::new(p)?;
        let blocks: Vec<_> = config.blocks().collect();
        let (mut failures, mut done) = (0, 0);
        'waves: for wave in blocks.chunks(workers) {
            let counts: Vec<u64> = pool.install(|| {
                wave.par_iter()
                    .map(|b| count_failures(code, &judge, decoder, channel, config.seed, point, b.clone()))
                    .collect::<Result<_, _>>()
            })?;
            for (block, count) in wave.iter().zip(counts) {
                failures += count;
                done = block.end;
                if config.max_failures.is_some_and(|m| failures >= m) {
                    break 'waves;
                }
            }
        }
        let cp = CurvePoint::new(p, failures, done)?;
        on_point(&cp);
        points.push(cp);
    }
    Ok(points)
}
