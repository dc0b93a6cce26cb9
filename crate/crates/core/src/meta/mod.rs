//! Meta-learning re-initialization of a pre-trained model.
//!
//! The meta-model θ* starts at the base parameters. Each outer step adapts a
//! copy of θ* to every task with a few SGD steps (the inner loop) and then
//! moves θ* using either the first-order MAML validation gradients, the
//! Reptile parameter differences, or, as a baseline, a plain averaged
//! gradient step (joint training).
//!
//! BN running statistics are tracked per task: every task's inner loop starts
//! from and writes back to its own registry entry, and the meta statistics
//! stay at the base model's values under MAML and Reptile.

mod config;
mod inner;
mod outer;

pub use config::{Algorithm, MetaConfig};
pub use inner::{batch_schedule, inner_adapt, InnerResult, InnerSettings};
pub use outer::{joint_outer_step, maml_outer_step, maml_update, reptile_outer_step, reptile_update};

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{BnStats, NetworkSpec, ParamVector};
use crate::seed::derive;
use crate::speakers::TaskData;

/// Per-task BN running statistics plus the meta-model's own statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BnRegistry {
    pub per_task: BTreeMap<u32, BnStats>,
    pub meta: BnStats,
}

/// Utterances one task consumed during the most recent outer step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskTrace {
    pub task_id: u32,
    /// Indices into the task's adaptation set.
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct MetaState {
    pub theta_star: ParamVector,
    pub registry: BnRegistry,
    pub outer_step: usize,
    seed: u64,
    /// `(speaker_id, utterance index)` of every utterance read so far.
    pub consumed: BTreeSet<(u32, u32)>,
    pub last_step: Vec<TaskTrace>,
}

impl MetaState {
    /// θ* ← θ_base; every registry entry (per task and meta) ← a copy of `bn_base`.
    pub fn new(theta_base: &ParamVector, bn_base: &BnStats, task_ids: &[u32], seed: u64) -> Result<Self> {
        let mut per_task = BTreeMap::new();
        for &id in task_ids {
            if per_task.insert(id, bn_base.clone()).is_some() {
                return Err(Error::Config(format!("duplicate task id {id}")));
            }
        }
        Ok(Self {
            theta_star: theta_base.clone(),
            registry: BnRegistry {
                per_task,
                meta: bn_base.clone(),
            },
            outer_step: 0,
            seed,
            consumed: BTreeSet::new(),
            last_step: Vec::new(),
        })
    }

    /// Random stream for `task_id` at the current outer step; independent of task order.
    pub(crate) fn task_rng(&self, task_id: u32) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive(derive(self.seed, self.outer_step as u64), u64::from(task_id)))
    }

    fn record(&mut self, task: &TaskData, idx: &[usize]) {
        for &i in idx {
            let u = &task.adaptation[i];
            self.consumed.insert((u.speaker_id, u.index));
        }
    }

    /// Runs one task's inner loop from the current θ* and stores the adapted
    /// BN statistics in that task's registry entry only.
    ///
    /// With `holdout_validation` set, `val_batch_size` utterances are first
    /// set aside (disjoint from anything the inner loop may sample) and
    /// returned in the trace.
    pub fn adapt_task(
        &mut self,
        spec: &NetworkSpec,
        task: &TaskData,
        cfg: &MetaConfig,
        holdout_validation: bool,
    ) -> Result<(ParamVector, TaskTrace)> {
        let n = task.adaptation.len();
        if n == 0 {
            return Err(Error::EmptyData(format!("task {} has no adaptation data", task.id)));
        }
        let bn_init = self
            .registry
            .per_task
            .get(&task.id)
            .ok_or_else(|| Error::Config(format!("task {} has no registry entry", task.id)))?
            .clone();
        let mut rng = self.task_rng(task.id);
        let mut order: Vec<usize> = (0..n).collect();
        let (pool, validation) = if holdout_validation {
            if n <= cfg.val_batch_size {
                return Err(Error::EmptyData(format!(
                    "task {} has {n} adaptation utterances, need more than {} for disjoint train/validation samples",
                    task.id, cfg.val_batch_size
                )));
            }
            order.shuffle(&mut rng);
            let mut val = order.split_off(n - cfg.val_batch_size);
            val.sort_unstable();
            order.sort_unstable();
            (order, val)
        } else {
            (order, Vec::new())
        };
        let data: Vec<_> = pool.iter().map(|&i| &task.adaptation[i].sample).collect();
        let settings = InnerSettings {
            steps: cfg.inner_steps,
            alpha: cfg.alpha,
            batch_size: cfg.inner_batch_size,
            loss: cfg.loss,
        };
        let res = inner_adapt(spec, &self.theta_star, &bn_init, &data, &settings, &mut rng)?;
        let train: Vec<usize> = res.used.iter().map(|&k| pool[k]).collect();
        self.record(task, &train);
        self.record(task, &validation);
        self.registry.per_task.insert(task.id, res.bn);
        Ok((
            res.theta,
            TaskTrace {
                task_id: task.id,
                train,
                validation,
            },
        ))
    }
}

fn sorted_tasks<'a>(tasks: &[&'a TaskData]) -> Vec<&'a TaskData> {
    let mut v = tasks.to_vec();
    v.sort_by_key(|t| t.id);
    v
}

/// Re-initializes a base model with `cfg.outer_steps` outer steps of the
/// configured algorithm.
///
/// The caller is responsible for excluding the held-out target speaker from
/// `tasks`. Downstream adaptation should start from `theta_star` together
/// with `registry.meta`, which equals `bn_base` for MAML and Reptile.
pub fn reinitialize(
    spec: &NetworkSpec,
    theta_base: &ParamVector,
    bn_base: &BnStats,
    tasks: &[&TaskData],
    cfg: &MetaConfig,
) -> Result<MetaState> {
    cfg.validate()?;
    spec.validate()?;
    if tasks.is_empty() {
        return Err(Error::EmptyData("re-initialization needs at least one task".into()));
    }
    let ids: Vec<u32> = tasks.iter().map(|t| t.id).collect();
    let mut state = MetaState::new(theta_base, bn_base, &ids, cfg.seed)?;
    for _ in 0..cfg.outer_steps {
        if cfg.reset_task_bn {
            for entry in state.registry.per_task.values_mut() {
                *entry = bn_base.clone();
            }
        }
        state = match cfg.algorithm {
            Algorithm::Maml => maml_outer_step(spec, state, tasks, cfg)?,
            Algorithm::Reptile => reptile_outer_step(spec, state, tasks, cfg)?,
            Algorithm::Joint => joint_outer_step(spec, state, tasks, cfg)?,
        };
        if !state.theta_star.all_finite() {
            return Err(Error::Divergence { step: state.outer_step });
        }
    }
    Ok(state)
}
