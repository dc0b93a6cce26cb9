//! JSON checkpoint format.
//!
//! ```text
//! {"spec": {...}, "segments": [{"name", "offset", "shape"}], "values": [...],
//!  "bn": [{"layer", "mean", "var", "epsilon", "momentum"}],
//!  "registry": {"<task id>": [bn entries]}}      // optional
//! ```
//!
//! Every float is written with 17 significant digits so a save/load cycle is
//! bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::bn::{BnLayerStats, BnStats};
use super::network::NetworkSpec;
use super::params::{ParamVector, Segment};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub params: ParamVector,
    pub bn: BnStats,
    /// Per-task BN statistics keyed by task (speaker) id, when present.
    pub registry: Option<BTreeMap<u32, BnStats>>,
}

fn exact_number(v: f64) -> Result<Box<RawValue>> {
    if !v.is_finite() {
        return Err(Error::NonFinite("checkpoint value".into()));
    }
    Ok(RawValue::from_string(format!("{v:.16e}"))?)
}

fn exact_array(vs: &[f64]) -> Result<Box<RawValue>> {
    let mut s = String::with_capacity(vs.len() * 24 + 2);
    s.push('[');
    for (i, &v) in vs.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite("checkpoint array".into()));
        }
        if i > 0 {
            s.push(',');
        }
        s.push_str(&format!("{v:.16e}"));
    }
    s.push(']');
    Ok(RawValue::from_string(s)?)
}

#[derive(Serialize)]
struct BnEntryOut {
    layer: usize,
    mean: Box<RawValue>,
    var: Box<RawValue>,
    epsilon: Box<RawValue>,
    momentum: Box<RawValue>,
}

#[derive(Serialize)]
struct CheckpointOut<'a> {
    spec: &'a NetworkSpec,
    segments: &'a [Segment],
    values: Box<RawValue>,
    bn: Vec<BnEntryOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    registry: Option<BTreeMap<u32, Vec<BnEntryOut>>>,
}

#[derive(Deserialize)]
struct CheckpointIn {
    spec: NetworkSpec,
    segments: Vec<Segment>,
    values: Vec<f64>,
    bn: Vec<BnLayerStats>,
    #[serde(default)]
    registry: Option<BTreeMap<u32, Vec<BnLayerStats>>>,
}

fn bn_out(stats: &BnStats) -> Result<Vec<BnEntryOut>> {
    stats
        .layers
        .iter()
        .map(|l| {
            Ok(BnEntryOut {
                layer: l.layer,
                mean: exact_array(&l.mean)?,
                var: exact_array(&l.var)?,
                epsilon: exact_number(l.epsilon)?,
                momentum: exact_number(l.momentum)?,
            })
        })
        .collect()
}

impl Checkpoint {
    pub fn new(spec: NetworkSpec, params: ParamVector, bn: BnStats) -> Self {
        Self {
            spec,
            params,
            bn,
            registry: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let registry = match &self.registry {
            Some(r) => Some(
                r.iter()
                    .map(|(k, v)| Ok((*k, bn_out(v)?)))
                    .collect::<Result<BTreeMap<_, _>>>()?,
            ),
            None => None,
        };
        let out = CheckpointOut {
            spec: &self.spec,
            segments: self.params.segments(),
            values: exact_array(self.params.values())?,
            bn: bn_out(&self.bn)?,
            registry,
        };
        let mut s = serde_json::to_string_pretty(&out)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: CheckpointIn = serde_json::from_str(text)?;
        raw.spec.validate()?;
        let params = ParamVector::from_parts(raw.segments, raw.values)?;
        if !raw.spec.init_params(0)?.same_registry(&params) {
            return Err(Error::RegistryMismatch(
                "checkpoint segments do not match its spec".into(),
            ));
        }
        let bn = BnStats { layers: raw.bn };
        let expected = raw.spec.init_bn_stats();
        let check = |s: &BnStats| -> Result<()> {
            let shape = |b: &BnStats| b.layers.iter().map(|l| (l.layer, l.width())).collect::<Vec<_>>();
            if shape(s) != shape(&expected) {
                return Err(Error::Dimension("checkpoint bn layout does not match its spec".into()));
            }
            s.layers.iter().try_for_each(BnLayerStats::validate)
        };
        check(&bn)?;
        let registry = match raw.registry {
            Some(r) => {
                let mut out = BTreeMap::new();
                for (k, layers) in r {
                    let s = BnStats { layers };
                    check(&s)?;
                    out.insert(k, s);
                }
                Some(out)
            }
            None => None,
        };
        Ok(Self {
            spec: raw.spec,
            params,
            bn,
            registry,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
