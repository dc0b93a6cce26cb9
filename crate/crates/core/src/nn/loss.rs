use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::network::Sample;
use crate::ctc::ctc_nll;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Ctc,
    Ce,
}

/// Frame-level cross-entropy `−(1/T) Σ_t logprobs[t, target_t]` and its
/// gradient with respect to the log-probabilities.
pub fn ce_loss(logprobs: &Matrix, targets: &[u32]) -> Result<(f64, Matrix)> {
    let t = logprobs.rows();
    let v = logprobs.cols();
    if targets.len() != t {
        return Err(Error::Dimension(format!(
            "{} frame targets for {t} frames",
            targets.len()
        )));
    }
    if t == 0 {
        return Err(Error::EmptyData("cross-entropy over zero frames".into()));
    }
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(t, v);
    let scale = 1.0 / t as f64;
    for (r, &target) in targets.iter().enumerate() {
        let k = target as usize;
        if k >= v {
            return Err(Error::TargetOutOfRange { target: k, classes: v });
        }
        loss -= logprobs.get(r, k);
        grad.set(r, k, -scale);
    }
    Ok((loss * scale, grad))
}

/// Mean per-utterance loss over a batch, with per-utterance upstream gradients.
pub fn batch_loss(logprobs: &[Matrix], batch: &[&Sample], kind: LossKind) -> Result<(f64, Vec<Matrix>)> {
    if logprobs.len() != batch.len() || batch.is_empty() {
        return Err(Error::Dimension(format!(
            "{} outputs for {} utterances",
            logprobs.len(),
            batch.len()
        )));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(batch.len());
    for (lp, s) in logprobs.iter().zip(batch) {
        let (loss, mut g) = match kind {
            LossKind::Ctc => ctc_nll(lp, &s.labels)?,
            LossKind::Ce => ce_loss(lp, &s.labels)?,
        };
        total += loss;
        for v in g.as_mut_slice() {
            *v *= scale;
        }
        grads.push(g);
    }
    Ok((total * scale, grads))
}
