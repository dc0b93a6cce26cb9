use super::bn::{BnStats, Mode};
use super::loss::LossKind;
use super::network::{loss_and_grad, loss_only, NetworkSpec, Sample};
use super::params::ParamVector;
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Maximum relative error between the analytic gradient and central finite
/// differences, `max_i |a_i − n_i| / max(1, |n_i|)`.
///
/// BN runs on its running statistics so the loss is a function of the
/// parameters alone.
pub fn grad_check(
    spec: &NetworkSpec,
    params: &ParamVector,
    stats: &BnStats,
    batch: &[&Sample],
    kind: LossKind,
    h: f64,
) -> Result<f64> {
    grad_check_mode(spec, params, stats, batch, kind, h, Mode::Eval)
}

/// [`grad_check`] with an explicit BN mode. In train mode the checked function
/// is the loss under batch statistics (the running-stat side effect is ignored).
pub fn grad_check_mode(
    spec: &NetworkSpec,
    params: &ParamVector,
    stats: &BnStats,
    batch: &[&Sample],
    kind: LossKind,
    h: f64,
    mode: Mode,
) -> Result<f64> {
    let analytic = loss_and_grad(spec, params, stats, batch, mode, kind)?.grad;
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let orig = params.values()[i];
        probe.values_mut()[i] = orig + h;
        let plus = loss_only(spec, &probe, stats, batch, mode, kind)?;
        probe.values_mut()[i] = orig - h;
        let minus = loss_only(spec, &probe, stats, batch, mode, kind)?;
        probe.values_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let err = (analytic.values()[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
