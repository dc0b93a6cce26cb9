use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta::MetaConfig;
use crate::nn::NetworkSpec;
use crate::speakers::DataConfig;

/// Hidden-layer layout; input and output widths come from [`DataConfig`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub hidden_dims: Vec<usize>,
    pub bn_after: Vec<bool>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![32],
            bn_after: vec![true],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 0.1,
            batch_size: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub epochs: usize,
    pub lr: f64,
    /// The learning rate halves every epoch after this one.
    pub decay_after: usize,
    /// Fraction of the adaptation set used for fine-tuning, in `(0, 1]`.
    pub data_ratio: f64,
    pub batch_size: usize,
    /// Keep BN running statistics fixed during adaptation.
    pub freeze_bn: bool,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 0.003,
            decay_after: 5,
            data_ratio: 1.0,
            batch_size: 8,
            freeze_bn: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct EvalConfig {
    /// Target speakers; all dysarthric speakers when absent.
    pub targets: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

/// Full experiment description, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub network: NetworkConfig,
    pub pretrain: PretrainConfig,
    pub meta: MetaConfig,
    pub adapt: AdaptConfig,
    pub eval: EvalConfig,
    pub seeds: Vec<u64>,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            network: NetworkConfig::default(),
            pretrain: PretrainConfig::default(),
            meta: MetaConfig {
                outer_steps: 150,
                inner_steps: 5,
                alpha: 0.05,
                eta: 0.1,
                ..MetaConfig::default()
            },
            adapt: AdaptConfig::default(),
            eval: EvalConfig::default(),
            seeds: vec![1, 2, 3, 4, 5],
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn network_spec(&self) -> NetworkSpec {
        NetworkSpec {
            input_dim: self.data.feature_dim,
            hidden_dims: self.network.hidden_dims.clone(),
            vocab_size: self.data.vocab_size,
            bn_after: self.network.bn_after.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.network_spec().validate()?;
        self.meta.validate()?;
        if !(self.adapt.data_ratio > 0.0 && self.adapt.data_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "data_ratio {} must lie in (0, 1]",
                self.adapt.data_ratio
            )));
        }
        if self.adapt.epochs == 0 {
            return Err(Error::Config("adaptation needs at least one epoch".into()));
        }
        if self.adapt.batch_size == 0 || self.pretrain.batch_size == 0 {
            return Err(Error::Config("batch sizes must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.data.utts_per_speaker < 3 || self.data.proto_len == 0 {
            return Err(Error::Config(
                "each speaker needs at least 3 utterances and non-empty prototypes".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"seeds":[7],"adapt":{"data_ratio":0.5}}"#).unwrap();
        assert_eq!(cfg.seeds, vec![7]);
        assert_eq!(cfg.adapt.data_ratio, 0.5);
        assert_eq!(cfg.adapt.epochs, 10);
        assert_eq!(cfg.meta.inner_steps, 5);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_ratio() {
        let mut cfg = ExperimentConfig::default();
        cfg.adapt.data_ratio = 0.0;
        assert!(cfg.validate().is_err());
        cfg.adapt.data_ratio = 1.5;
        assert!(cfg.validate().is_err());
    }
}
