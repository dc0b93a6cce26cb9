use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{AdaptConfig, PretrainConfig};
use crate::ctc::{edit_distance, greedy_decode, EditCounts};
use crate::error::{Error, Result};
use crate::nn::{
    forward, loss_and_grad, loss_only, sgd_step, BnStats, LossKind, Mode, NetworkSpec, ParamVector, Sample,
};
use crate::seed::derive;
use crate::speakers::TaskData;

const STREAM_INIT: u64 = 0x696e_6974;
const STREAM_PRETRAIN: u64 = 0x7072_6574;
const STREAM_SUBSET: u64 = 0x7375_6273;
const STREAM_EPOCH: u64 = 0x6570_6f63;

/// Greedy-decode every sample in eval mode and count token edits.
pub fn evaluate(spec: &NetworkSpec, params: &ParamVector, bn: &BnStats, samples: &[&Sample]) -> Result<EditCounts> {
    let out = forward(spec, params, bn, samples, Mode::Eval)?;
    let mut counts = EditCounts::default();
    for (lp, s) in out.logprobs.iter().zip(samples) {
        let hyp = greedy_decode(lp);
        counts.add(EditCounts {
            errors: edit_distance(&s.labels, &hyp),
            ref_len: s.labels.len(),
        });
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    /// Pooled loss before the first update.
    pub initial_loss: f64,
    /// Mean batch loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Pooled loss after the last epoch.
    pub final_loss: f64,
}

/// Trains a freshly initialized network with CTC and plain SGD on the pooled
/// normal-speaker utterances (all blocks).
pub fn pretrain_base(
    spec: &NetworkSpec,
    normal: &[TaskData],
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<(ParamVector, BnStats, PretrainReport)> {
    let pool: Vec<&Sample> = normal
        .iter()
        .flat_map(|t| t.adaptation.iter().chain(&t.test))
        .map(|u| &u.sample)
        .collect();
    if pool.is_empty() {
        return Err(Error::EmptyData("normal-speaker pool is empty".into()));
    }
    let mut params = spec.init_params(derive(seed, STREAM_INIT))?;
    let mut bn = spec.init_bn_stats();
    let pooled_loss = |p: &ParamVector, b: &BnStats| loss_only(spec, p, b, &pool, Mode::Train, LossKind::Ctc);
    let initial_loss = pooled_loss(&params, &bn)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, STREAM_PRETRAIN));
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| pool[i]).collect();
            let lg = loss_and_grad(spec, &params, &bn, &batch, Mode::Train, LossKind::Ctc)?;
            if !lg.loss.is_finite() {
                return Err(Error::Divergence { step });
            }
            params = sgd_step(&params, &lg.grad, cfg.lr)?;
            if !params.all_finite() {
                return Err(Error::Divergence { step });
            }
            bn = lg.stats;
            total += lg.loss;
            batches += 1;
            step += 1;
        }
        epoch_losses.push(total / batches as f64);
    }
    let final_loss = pooled_loss(&params, &bn)?;
    Ok((
        params,
        bn,
        PretrainReport {
            initial_loss,
            epoch_losses,
            final_loss,
        },
    ))
}

/// Adaptation-set indices for a data ratio. Subsets for smaller ratios are
/// prefixes of those for larger ratios under the same seed.
pub fn ratio_subset(task: &TaskData, ratio: f64, seed: u64) -> Result<Vec<usize>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!("data_ratio {ratio} must lie in (0, 1]")));
    }
    let n = task.adaptation.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive(derive(seed, STREAM_SUBSET), u64::from(task.id)));
    order.shuffle(&mut rng);
    let keep = ((ratio * n as f64).ceil() as usize).min(n);
    order.truncate(keep);
    if order.is_empty() {
        return Err(Error::EmptyData(format!(
            "no adaptation data selected for speaker {}",
            task.id
        )));
    }
    Ok(order)
}

/// Test TER and adaptation-subset loss after one epoch (epoch 0 = before adapting).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochPoint {
    pub epoch: usize,
    pub ter: f64,
    pub errors: usize,
    pub ref_len: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub theta: ParamVector,
    pub bn: BnStats,
    /// `epochs + 1` points, starting at epoch 0.
    pub trajectory: Vec<EpochPoint>,
}

/// Learning rate for a 1-based epoch: constant up to `decay_after`, then halved each epoch.
pub fn adapt_lr(cfg: &AdaptConfig, epoch: usize) -> f64 {
    if epoch <= cfg.decay_after {
        cfg.lr
    } else {
        cfg.lr * 0.5f64.powi((epoch - cfg.decay_after) as i32)
    }
}

fn measure(
    spec: &NetworkSpec,
    theta: &ParamVector,
    bn: &BnStats,
    train: &[&Sample],
    test: &[&Sample],
    epoch: usize,
) -> Result<EpochPoint> {
    let counts = evaluate(spec, theta, bn, test)?;
    let loss = loss_only(spec, theta, bn, train, Mode::Eval, LossKind::Ctc)?;
    Ok(EpochPoint {
        epoch,
        ter: counts.rate()?,
        errors: counts.errors,
        ref_len: counts.ref_len,
        loss,
    })
}

/// Fine-tunes on a seeded subset of the target's adaptation data, measuring
/// test TER (eval-mode BN) before adaptation and after every epoch.
pub fn adapt_speaker(
    spec: &NetworkSpec,
    theta_init: &ParamVector,
    bn_init: &BnStats,
    target: &TaskData,
    cfg: &AdaptConfig,
    seed: u64,
) -> Result<AdaptOutcome> {
    let subset = ratio_subset(target, cfg.data_ratio, seed)?;
    let train: Vec<&Sample> = subset.iter().map(|&i| &target.adaptation[i].sample).collect();
    let test = target.test_samples();
    let mut theta = theta_init.clone();
    let mut bn = bn_init.clone();
    let mut trajectory = Vec::with_capacity(cfg.epochs + 1);
    trajectory.push(measure(spec, &theta, &bn, &train, &test, 0)?);
    let mut rng = ChaCha8Rng::seed_from_u64(derive(derive(seed, STREAM_EPOCH), u64::from(target.id)));
    let mode = if cfg.freeze_bn { Mode::Eval } else { Mode::Train };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        let lr = adapt_lr(cfg, epoch);
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| train[i]).collect();
            let lg = loss_and_grad(spec, &theta, &bn, &batch, mode, LossKind::Ctc)?;
            if !lg.loss.is_finite() {
                return Err(Error::Divergence { step });
            }
            theta = sgd_step(&theta, &lg.grad, lr)?;
            bn = lg.stats;
            step += 1;
        }
        trajectory.push(measure(spec, &theta, &bn, &train, &test, epoch)?);
    }
    Ok(AdaptOutcome { theta, bn, trajectory })
}
