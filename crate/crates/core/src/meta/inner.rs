use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{loss_and_grad, sgd_step, BnStats, LossKind, Mode, NetworkSpec, ParamVector, Sample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSettings {
    pub steps: usize,
    pub alpha: f64,
    pub batch_size: usize,
    pub loss: LossKind,
}

#[derive(Debug, Clone)]
pub struct InnerResult {
    pub theta: ParamVector,
    pub bn: BnStats,
    /// Indices into the training data that were sampled.
    pub used: Vec<usize>,
    /// Loss of each inner step, before its update.
    pub losses: Vec<f64>,
}

/// Splits a sampled subset into `steps` batches of `batch_size`, wrapping
/// around the subset when it is shorter than `steps · batch_size`. Each batch
/// is sorted.
pub fn batch_schedule(subset: &[usize], steps: usize, batch_size: usize) -> Vec<Vec<usize>> {
    let len = subset.len();
    let per = batch_size.min(len);
    (0..steps)
        .map(|j| {
            let mut b: Vec<usize> = (0..per).map(|k| subset[(j * batch_size + k) % len]).collect();
            b.sort_unstable();
            b
        })
        .collect()
}

/// `J` SGD steps starting from copies of `(theta_init, bn_init)`.
///
/// A subset of `min(J · batch, n)` utterances is drawn from `data` and the
/// steps iterate over it. BN runs in train mode, so the returned running
/// statistics have advanced even when `alpha = 0`.
pub fn inner_adapt(
    spec: &NetworkSpec,
    theta_init: &ParamVector,
    bn_init: &BnStats,
    data: &[&Sample],
    settings: &InnerSettings,
    rng: &mut impl Rng,
) -> Result<InnerResult> {
    if data.is_empty() {
        return Err(Error::EmptyData("inner loop has no training data".into()));
    }
    if settings.steps == 0 || settings.batch_size == 0 {
        return Err(Error::Config(
            "inner loop needs at least one step and a positive batch size".into(),
        ));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    order.truncate((settings.steps * settings.batch_size).min(data.len()));
    let mut theta = theta_init.clone();
    let mut bn = bn_init.clone();
    let mut losses = Vec::with_capacity(settings.steps);
    for batch_idx in batch_schedule(&order, settings.steps, settings.batch_size) {
        let batch: Vec<&Sample> = batch_idx.iter().map(|&i| data[i]).collect();
        let lg = loss_and_grad(spec, &theta, &bn, &batch, Mode::Train, settings.loss)?;
        losses.push(lg.loss);
        theta = sgd_step(&theta, &lg.grad, settings.alpha)?;
        bn = lg.stats;
    }
    order.sort_unstable();
    Ok(InnerResult {
        theta,
        bn,
        used: order,
        losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_wraps_around() {
        let s = batch_schedule(&[4, 1, 7], 3, 2);
        assert_eq!(s, vec![vec![1, 4], vec![4, 7], vec![1, 7]]);
        let full = batch_schedule(&[2, 0, 1], 2, 8);
        assert_eq!(full, vec![vec![0, 1, 2], vec![0, 1, 2]]);
    }
}
