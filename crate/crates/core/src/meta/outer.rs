use rand::seq::SliceRandom;

use super::{sorted_tasks, Algorithm, MetaConfig, MetaState, TaskTrace};
use crate::error::{Error, Result};
use crate::nn::{loss_and_grad, sgd_step, Mode, NetworkSpec, ParamVector, Sample};
use crate::speakers::TaskData;

fn expect(cfg: &MetaConfig, algorithm: Algorithm) -> Result<()> {
    if cfg.algorithm != algorithm {
        return Err(Error::Config(format!(
            "{} outer step called with algorithm {}",
            algorithm.name(),
            cfg.algorithm.name()
        )));
    }
    if cfg.inner_steps == 0 || cfg.inner_batch_size == 0 || cfg.val_batch_size == 0 {
        return Err(Error::Config("inner steps and batch sizes must be at least 1".into()));
    }
    Ok(())
}

fn mean(sum: &mut ParamVector, count: usize) {
    sum.scale(1.0 / count as f64);
}

/// First-order MAML update `θ* − η · (1/I) · Σ g_i`.
pub fn maml_update(theta_star: &ParamVector, grads: &[ParamVector], eta: f64) -> Result<ParamVector> {
    let mut sum = theta_star.zeros_like();
    for g in grads {
        sum.accumulate(g)?;
    }
    mean(&mut sum, grads.len().max(1));
    sgd_step(theta_star, &sum, eta)
}

/// Reptile update `θ* − η · (1/I) · Σ (θ* − θ_i)`.
pub fn reptile_update(theta_star: &ParamVector, adapted: &[ParamVector], eta: f64) -> Result<ParamVector> {
    let mut sum = theta_star.zeros_like();
    for theta_i in adapted {
        sum.accumulate(&theta_star.sub(theta_i)?)?;
    }
    mean(&mut sum, adapted.len().max(1));
    sgd_step(theta_star, &sum, eta)
}

/// One first-order MAML outer step.
///
/// Each task adapts a copy of θ*, then contributes the gradient of its
/// validation loss evaluated at the adapted parameters; the averaged
/// gradient is applied to θ*. Validation utterances are disjoint from the
/// inner-loop sample of the same step.
pub fn maml_outer_step(
    spec: &NetworkSpec,
    mut state: MetaState,
    tasks: &[&TaskData],
    cfg: &MetaConfig,
) -> Result<MetaState> {
    expect(cfg, Algorithm::Maml)?;
    let mut grads = Vec::with_capacity(tasks.len());
    let mut traces = Vec::with_capacity(tasks.len());
    for task in sorted_tasks(tasks) {
        let (theta_i, trace) = state.adapt_task(spec, task, cfg, true)?;
        let val: Vec<&Sample> = trace.validation.iter().map(|&i| &task.adaptation[i].sample).collect();
        let bn_i = &state.registry.per_task[&task.id];
        // batch statistics; the running-stat side effect of this pass is discarded
        let lg = loss_and_grad(spec, &theta_i, bn_i, &val, Mode::Train, cfg.loss)?;
        grads.push(lg.grad);
        traces.push(trace);
    }
    state.theta_star = maml_update(&state.theta_star, &grads, cfg.eta)?;
    state.last_step = traces;
    state.outer_step += 1;
    Ok(state)
}

/// One Reptile outer step: θ* moves toward the average adapted parameters.
pub fn reptile_outer_step(
    spec: &NetworkSpec,
    mut state: MetaState,
    tasks: &[&TaskData],
    cfg: &MetaConfig,
) -> Result<MetaState> {
    expect(cfg, Algorithm::Reptile)?;
    let mut adapted = Vec::with_capacity(tasks.len());
    let mut traces = Vec::with_capacity(tasks.len());
    for task in sorted_tasks(tasks) {
        let (theta_i, trace) = state.adapt_task(spec, task, cfg, false)?;
        adapted.push(theta_i);
        traces.push(trace);
    }
    state.theta_star = reptile_update(&state.theta_star, &adapted, cfg.eta)?;
    state.last_step = traces;
    state.outer_step += 1;
    Ok(state)
}

/// Joint-training baseline: one SGD step with learning rate η on the mean of
/// per-task gradients, one batch of `inner_batch_size` per task. The meta BN
/// statistics are updated in train mode, task by task.
pub fn joint_outer_step(
    spec: &NetworkSpec,
    mut state: MetaState,
    tasks: &[&TaskData],
    cfg: &MetaConfig,
) -> Result<MetaState> {
    expect(cfg, Algorithm::Joint)?;
    if tasks.is_empty() {
        return Err(Error::EmptyData("joint step with no tasks".into()));
    }
    let mut sum = state.theta_star.zeros_like();
    let mut traces = Vec::with_capacity(tasks.len());
    for task in sorted_tasks(tasks) {
        let n = task.adaptation.len();
        if n == 0 {
            return Err(Error::EmptyData(format!("task {} has no adaptation data", task.id)));
        }
        let mut rng = state.task_rng(task.id);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order.truncate(cfg.inner_batch_size.min(n));
        order.sort_unstable();
        let batch: Vec<&Sample> = order.iter().map(|&i| &task.adaptation[i].sample).collect();
        let lg = loss_and_grad(
            spec,
            &state.theta_star,
            &state.registry.meta,
            &batch,
            Mode::Train,
            cfg.loss,
        )?;
        sum.accumulate(&lg.grad)?;
        state.registry.meta = lg.stats;
        for &i in &order {
            let u = &task.adaptation[i];
            state.consumed.insert((u.speaker_id, u.index));
        }
        traces.push(TaskTrace {
            task_id: task.id,
            train: order,
            validation: Vec::new(),
        });
    }
    mean(&mut sum, tasks.len());
    state.theta_star = sgd_step(&state.theta_star, &sum, cfg.eta)?;
    state.last_step = traces;
    state.outer_step += 1;
    Ok(state)
}
