use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AdaptConfig, ExperimentConfig};
use super::train::{adapt_speaker, evaluate, pretrain_base, EpochPoint, PretrainReport};
use crate::ctc::EditCounts;
use crate::error::{Error, Result};
use crate::meta::{reinitialize, Algorithm, MetaState};
use crate::nn::{BnStats, NetworkSpec, ParamVector};
use crate::seed::derive;
use crate::speakers::{generate_corpus, loso_split, Corpus, SeverityBand, TaskData};

const STREAM_META: u64 = 0x6d65_7461;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "base")]
    Base,
    #[serde(rename = "base+adapt")]
    BaseAdapt,
    #[serde(rename = "joint+adapt")]
    JointAdapt,
    #[serde(rename = "maml+adapt")]
    MamlAdapt,
    #[serde(rename = "reptile+adapt")]
    ReptileAdapt,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Base,
        Strategy::BaseAdapt,
        Strategy::JointAdapt,
        Strategy::MamlAdapt,
        Strategy::ReptileAdapt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Base => "base",
            Strategy::BaseAdapt => "base+adapt",
            Strategy::JointAdapt => "joint+adapt",
            Strategy::MamlAdapt => "maml+adapt",
            Strategy::ReptileAdapt => "reptile+adapt",
        }
    }

    pub fn reinit_algorithm(self) -> Option<Algorithm> {
        match self {
            Strategy::JointAdapt => Some(Algorithm::Joint),
            Strategy::MamlAdapt => Some(Algorithm::Maml),
            Strategy::ReptileAdapt => Some(Algorithm::Reptile),
            Strategy::Base | Strategy::BaseAdapt => None,
        }
    }

    pub fn adapts(self) -> bool {
        self != Strategy::Base
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s}")))
    }
}

/// One `(seed, target, strategy, ratio)` result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub seed: u64,
    pub target_id: u32,
    pub band: Option<SeverityBand>,
    pub strategy: Strategy,
    pub ratio: f64,
    /// Epoch 0 through the last adaptation epoch; a single point for `base`.
    pub trajectory: Vec<EpochPoint>,
    #[serde(skip)]
    pub wall_ms: u128,
}

impl Cell {
    pub fn final_point(&self) -> &EpochPoint {
        self.trajectory.last().expect("trajectory has at least epoch 0")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cells: Vec<Cell>,
    pub pretrain: BTreeMap<u64, PretrainReport>,
}

/// Base model plus the corpus it was trained alongside.
pub struct SeedContext {
    pub seed: u64,
    pub corpus: Corpus,
    pub spec: NetworkSpec,
    pub theta_base: ParamVector,
    pub bn_base: BnStats,
    pub pretrain: PretrainReport,
}

pub fn prepare_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedContext> {
    cfg.validate()?;
    let corpus = generate_corpus(&cfg.data, seed)?;
    let spec = cfg.network_spec();
    let (theta_base, bn_base, pretrain) = pretrain_base(&spec, &corpus.normal, &cfg.pretrain, seed)?;
    Ok(SeedContext {
        seed,
        corpus,
        spec,
        theta_base,
        bn_base,
        pretrain,
    })
}

/// Re-initializes for one LOSO target: meta tasks are every other dysarthric speaker.
///
/// Fails if any utterance tagged with the target speaker was consumed.
pub fn reinit_for_target(
    ctx: &SeedContext,
    cfg: &ExperimentConfig,
    target_id: u32,
    algorithm: Algorithm,
) -> Result<MetaState> {
    reinit_loso(
        &ctx.spec,
        &ctx.corpus,
        &ctx.theta_base,
        &ctx.bn_base,
        ctx.seed,
        cfg,
        target_id,
        algorithm,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn reinit_loso(
    spec: &NetworkSpec,
    corpus: &Corpus,
    theta_base: &ParamVector,
    bn_base: &BnStats,
    seed: u64,
    cfg: &ExperimentConfig,
    target_id: u32,
    algorithm: Algorithm,
) -> Result<MetaState> {
    let (meta_tasks, _) = loso_split(&corpus.dysarthric, target_id)?;
    let meta_cfg = crate::meta::MetaConfig {
        algorithm,
        seed: derive(derive(seed, STREAM_META), u64::from(target_id)),
        ..cfg.meta.clone()
    };
    let state = reinitialize(spec, theta_base, bn_base, &meta_tasks, &meta_cfg)?;
    if let Some((spk, idx)) = state.consumed.iter().find(|(spk, _)| *spk == target_id) {
        return Err(Error::Config(format!(
            "LOSO violation: utterance {idx} of target {spk} used in re-initialization"
        )));
    }
    Ok(state)
}

/// Adaptation seed for a target; shared by every strategy so that identical
/// initial models yield identical cells.
pub fn adapt_seed(seed: u64, target_id: u32) -> u64 {
    derive(seed, 0x6164_6170 ^ u64::from(target_id))
}

fn base_cell(ctx: &SeedContext, target: &TaskData, ratio: f64) -> Result<Cell> {
    let start = Instant::now();
    let counts = evaluate(&ctx.spec, &ctx.theta_base, &ctx.bn_base, &target.test_samples())?;
    let subset = super::train::ratio_subset(target, ratio, adapt_seed(ctx.seed, target.id))?;
    let train: Vec<_> = subset.iter().map(|&i| &target.adaptation[i].sample).collect();
    let loss = crate::nn::loss_only(
        &ctx.spec,
        &ctx.theta_base,
        &ctx.bn_base,
        &train,
        crate::nn::Mode::Eval,
        crate::nn::LossKind::Ctc,
    )?;
    Ok(Cell {
        seed: ctx.seed,
        target_id: target.id,
        band: target.band(),
        strategy: Strategy::Base,
        ratio,
        trajectory: vec![EpochPoint {
            epoch: 0,
            ter: counts.rate()?,
            errors: counts.errors,
            ref_len: counts.ref_len,
            loss,
        }],
        wall_ms: start.elapsed().as_millis(),
    })
}

/// All cells for one seed, one target and every strategy × ratio.
pub fn run_target(
    ctx: &SeedContext,
    cfg: &ExperimentConfig,
    target_id: u32,
    strategies: &[Strategy],
    ratios: &[f64],
) -> Result<Vec<Cell>> {
    let target = ctx.corpus.dysarthric_task(target_id)?;
    let mut cells = Vec::new();
    for &strategy in strategies {
        let start = Instant::now();
        if strategy == Strategy::Base {
            for &ratio in ratios {
                cells.push(base_cell(ctx, target, ratio)?);
            }
            continue;
        }
        let reinit;
        let (theta0, bn0) = match strategy.reinit_algorithm() {
            Some(alg) => {
                reinit = reinit_for_target(ctx, cfg, target_id, alg)?;
                (&reinit.theta_star, &reinit.registry.meta)
            }
            None => (&ctx.theta_base, &ctx.bn_base),
        };
        let reinit_ms = start.elapsed().as_millis();
        for &ratio in ratios {
            let t = Instant::now();
            let acfg = AdaptConfig {
                data_ratio: ratio,
                ..cfg.adapt.clone()
            };
            let out = adapt_speaker(&ctx.spec, theta0, bn0, target, &acfg, adapt_seed(ctx.seed, target_id))?;
            cells.push(Cell {
                seed: ctx.seed,
                target_id,
                band: target.band(),
                strategy,
                ratio,
                trajectory: out.trajectory,
                wall_ms: reinit_ms + t.elapsed().as_millis(),
            });
        }
    }
    Ok(cells)
}

fn targets(cfg: &ExperimentConfig, corpus: &Corpus) -> Vec<u32> {
    match &cfg.eval.targets {
        Some(t) => t.clone(),
        None => corpus.dysarthric.iter().map(|t| t.id).collect(),
    }
}

/// Runs every seed, LOSO target, strategy and ratio. Cells are ordered by
/// (seed, target, strategy, ratio) regardless of execution order.
pub fn run_experiment(cfg: &ExperimentConfig, strategies: &[Strategy], ratios: &[f64]) -> Result<EvalReport> {
    cfg.validate()?;
    for &r in ratios {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::Config(format!("ratio {r} must lie in (0, 1]")));
        }
    }
    let contexts = cfg
        .seeds
        .par_iter()
        .map(|&s| prepare_seed(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(&SeedContext, u32)> = contexts
        .iter()
        .flat_map(|ctx| targets(cfg, &ctx.corpus).into_iter().map(move |t| (ctx, t)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|(ctx, t)| run_target(ctx, cfg, *t, strategies, ratios))
        .collect::<Result<Vec<_>>>()?;
    let mut cells: Vec<Cell> = results.into_iter().flatten().collect();
    cells.sort_by(|a, b| {
        (a.seed, a.target_id, a.strategy)
            .cmp(&(b.seed, b.target_id, b.strategy))
            .then(a.ratio.total_cmp(&b.ratio))
    });
    let pretrain = contexts.into_iter().map(|c| (c.seed, c.pretrain)).collect();
    Ok(EvalReport { cells, pretrain })
}

/// Every target × strategy at the configured data ratio.
pub fn run_matrix(cfg: &ExperimentConfig) -> Result<EvalReport> {
    run_experiment(cfg, &Strategy::ALL, &[cfg.adapt.data_ratio])
}

/// Pooled (edits / reference tokens) TER per seed for cells matching a filter, at a given epoch
/// (clamped to each trajectory's last point).
pub fn overall_ter(
    report: &EvalReport,
    strategy: Strategy,
    ratio: f64,
    epoch: Option<usize>,
    band: Option<SeverityBand>,
) -> BTreeMap<u64, f64> {
    let mut acc: BTreeMap<u64, EditCounts> = BTreeMap::new();
    for c in &report.cells {
        if c.strategy != strategy || c.ratio != ratio || (band.is_some() && c.band != band) {
            continue;
        }
        let p = match epoch {
            Some(e) => c.trajectory.get(e).unwrap_or_else(|| c.final_point()),
            None => c.final_point(),
        };
        acc.entry(c.seed).or_default().add(EditCounts {
            errors: p.errors,
            ref_len: p.ref_len,
        });
    }
    acc.into_iter()
        .filter_map(|(s, c)| c.rate().ok().map(|r| (s, r)))
        .collect()
}

/// Median with the mean of the two middle values for even counts.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}
