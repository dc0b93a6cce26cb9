use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::LossKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Maml,
    Reptile,
    Joint,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Maml => "maml",
            Algorithm::Reptile => "reptile",
            Algorithm::Joint => "joint",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maml" => Ok(Algorithm::Maml),
            "reptile" => Ok(Algorithm::Reptile),
            "joint" => Ok(Algorithm::Joint),
            other => Err(Error::Config(format!("unknown algorithm {other}"))),
        }
    }
}

/// Inputs of the re-initialization loop. The task count is the number of
/// tasks handed to [`crate::meta::reinitialize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaConfig {
    pub algorithm: Algorithm,
    /// Outer steps K.
    pub outer_steps: usize,
    /// Inner steps J.
    pub inner_steps: usize,
    /// Inner learning rate α.
    pub alpha: f64,
    /// Outer learning rate η.
    pub eta: f64,
    /// Utterances per inner step (and per task for joint training).
    pub inner_batch_size: usize,
    /// Validation utterances per task (MAML only).
    pub val_batch_size: usize,
    pub seed: u64,
    /// Reset every per-task BN entry to the base statistics at the start of each outer step.
    pub reset_task_bn: bool,
    pub loss: LossKind,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Reptile,
            outer_steps: 150,
            inner_steps: 5,
            alpha: 1e-4,
            eta: 0.1,
            inner_batch_size: 8,
            val_batch_size: 8,
            seed: 0,
            reset_task_bn: false,
            loss: LossKind::Ctc,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inner_steps == 0 {
            return Err(Error::Config("inner_steps (J) must be at least 1".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config("alpha must be a finite non-negative number".into()));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config("eta must be a finite non-negative number".into()));
        }
        if self.inner_batch_size == 0 || self.val_batch_size == 0 {
            return Err(Error::Config("batch sizes must be at least 1".into()));
        }
        Ok(())
    }
}
