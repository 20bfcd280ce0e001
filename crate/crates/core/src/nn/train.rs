use alloc::vec::Vec;
use core::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AdamConfig, NnError, ParameterStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradClip {
    None,
    GlobalNorm(f64),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub clip: GradClip,
    pub seed: u64,
    /// Stop once the epoch loss has failed to improve by `plateau_tol`
    /// for this many consecutive epochs.
    pub plateau_patience: Option<usize>,
    pub plateau_tol: f64,
}

/// Anything that owns a [`ParameterStore`].
pub trait Trainable {
    fn store_mut(&mut self) -> &mut ParameterStore;
}

impl Trainable for ParameterStore {
    fn store_mut(&mut self) -> &mut ParameterStore {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_loss: f64,
    pub step: u64,
}

/// Minibatch Adam over `samples` items.
///
/// `batch_loss` receives the sample indices of one minibatch, must add the
/// gradient of the minibatch loss into the model's store and return that
/// loss. The
/// sample order is reshuffled every epoch from a generator seeded once with
/// `config.seed`. `on_epoch` may break to stop early.
pub fn fit<M: Trainable, E: From<NnError>>(
    model: &mut M,
    samples: usize,
    config: &FitConfig,
    mut batch_loss: impl FnMut(&[usize], &mut M) -> Result<f64, E>,
    mut on_epoch: impl FnMut(&EpochReport, &M) -> ControlFlow<()>,
) -> Result<Vec<EpochReport>, E> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples).collect();
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let batch = config.batch_size.max(1);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(batch) {
            model.store_mut().zero_grad();
            let loss = batch_loss(chunk, model)?;
            let store = model.store_mut();
            match config.clip {
                GradClip::None => {}
                GradClip::GlobalNorm(max) => {
                    store.clip_global_norm(max);
                }
                GradClip::Value(limit) => store.clip_values(limit),
            }
            store.adam_step(&config.adam)?;
            weighted += loss * chunk.len() as f64;
        }
        let report = EpochReport {
            epoch: epoch + 1,
            mean_loss: weighted / samples.max(1) as f64,
            step: model.store_mut().step(),
        };
        history.push(report);
        let flow = on_epoch(&report, model);
        if report.mean_loss < best - config.plateau_tol {
            best = report.mean_loss;
            stale = 0;
        } else {
            stale += 1;
        }
        if flow.is_break() || config.plateau_patience.is_some_and(|p| stale >= p) {
            break;
        }
    }
    Ok(history)
}
