//! Deterministic 64-bit per-frame MLP with batch normalization.

mod bn;
mod checkpoint;
mod gradcheck;
mod loss;
mod matrix;
mod network;
mod params;

pub use bn::{bn_backward, bn_forward, BnCache, BnLayerStats, BnStats, Mode, DEFAULT_EPSILON, DEFAULT_MOMENTUM};
pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, grad_check_mode, DEFAULT_STEP};
pub use loss::{batch_loss, ce_loss, LossKind};
pub use matrix::{log_softmax_backward, log_softmax_rows, logsumexp, Matrix};
pub use network::{
    backward, backward_checked, forward, loss_and_grad, loss_only, ForwardCache, ForwardOutput, LossAndGrad,
    NetworkSpec, Sample,
};
pub use params::{sgd_step, ParamVector, Segment};
