//! Experiment runner: pretraining, LOSO re-initialization, per-speaker
//! adaptation, evaluation and report generation.

mod config;
mod experiment;
mod report;
mod train;

pub use config::{AdaptConfig, EvalConfig, ExperimentConfig, NetworkConfig, OutputConfig, PretrainConfig};
pub use experiment::{
    adapt_seed, median, overall_ter, prepare_seed, reinit_for_target, reinit_loso, run_experiment, run_matrix,
    run_target, Cell, EvalReport, SeedContext, Strategy,
};
pub use report::{
    curve_rows, matrix_rows, read_csv, summarize, sweep_rows, trajectory_rows, write_csv, write_csv_file,
    write_summary, ReportRow, StrategySummary, Summary, CSV_HEADER,
};
pub use train::{
    adapt_lr, adapt_speaker, evaluate, pretrain_base, ratio_subset, AdaptOutcome, EpochPoint, PretrainReport,
};

use std::path::Path;

use crate::error::{Error, Result};
use crate::meta::Algorithm;
use crate::nn::Checkpoint;
use crate::speakers::generate_corpus;

/// Ratios for a data-ratio sweep.
pub fn sweep_ratio(cfg: &ExperimentConfig, ratios: &[f64]) -> Result<(EvalReport, Vec<ReportRow>)> {
    let report = run_experiment(cfg, &Strategy::ALL, ratios)?;
    let rows = sweep_rows(&report, ratios, cfg.adapt.epochs);
    Ok((report, rows))
}

/// TER-versus-epoch curves at the configured data ratio.
pub fn learning_curves(cfg: &ExperimentConfig) -> Result<(EvalReport, Vec<ReportRow>)> {
    let ratio = cfg.adapt.data_ratio;
    let report = run_experiment(cfg, &Strategy::ALL, &[ratio])?;
    let rows = curve_rows(&report, ratio, cfg.adapt.epochs);
    Ok((report, rows))
}

/// `pretrain`: trains the base model for one seed and writes its checkpoint.
pub fn cmd_pretrain(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<PretrainReport> {
    let ctx = prepare_seed(cfg, seed)?;
    Checkpoint::new(ctx.spec, ctx.theta_base, ctx.bn_base).save(out)?;
    Ok(ctx.pretrain)
}

fn check_spec(cfg: &ExperimentConfig, ck: &Checkpoint) -> Result<()> {
    if ck.spec != cfg.network_spec() {
        return Err(Error::Config(
            "checkpoint network does not match the configured network".into(),
        ));
    }
    Ok(())
}

/// `reinit`: re-initializes a base checkpoint for one LOSO target and writes
/// θ* with the downstream BN statistics and the per-task registry.
pub fn cmd_reinit(
    cfg: &ExperimentConfig,
    seed: u64,
    base: &Path,
    target_id: u32,
    algorithm: Algorithm,
    out: &Path,
) -> Result<()> {
    cfg.validate()?;
    let ck = Checkpoint::load(base)?;
    check_spec(cfg, &ck)?;
    let corpus = generate_corpus(&cfg.data, seed)?;
    let state = reinit_loso(&ck.spec, &corpus, &ck.params, &ck.bn, seed, cfg, target_id, algorithm)?;
    let mut out_ck = Checkpoint::new(ck.spec, state.theta_star, state.registry.meta);
    out_ck.registry = Some(state.registry.per_task);
    out_ck.save(out)
}

fn cell_report(
    seed: u64,
    target: &crate::speakers::TaskData,
    ratio: f64,
    trajectory: Vec<EpochPoint>,
    label: Strategy,
) -> EvalReport {
    EvalReport {
        cells: vec![Cell {
            seed,
            target_id: target.id,
            band: target.band(),
            strategy: label,
            ratio,
            trajectory,
            wall_ms: 0,
        }],
        pretrain: Default::default(),
    }
}

/// `adapt`: fine-tunes a checkpoint on one target speaker, writes the adapted
/// checkpoint and a per-epoch trajectory CSV.
pub fn cmd_adapt(
    cfg: &ExperimentConfig,
    seed: u64,
    checkpoint: &Path,
    target_id: u32,
    out: &Path,
    report: &Path,
) -> Result<Vec<EpochPoint>> {
    cfg.validate()?;
    let ck = Checkpoint::load(checkpoint)?;
    check_spec(cfg, &ck)?;
    let corpus = generate_corpus(&cfg.data, seed)?;
    let target = corpus.dysarthric_task(target_id)?;
    let res = adapt_speaker(
        &ck.spec,
        &ck.params,
        &ck.bn,
        target,
        &cfg.adapt,
        adapt_seed(seed, target_id),
    )?;
    Checkpoint::new(ck.spec, res.theta, res.bn).save(out)?;
    let rep = cell_report(
        seed,
        target,
        cfg.adapt.data_ratio,
        res.trajectory.clone(),
        Strategy::BaseAdapt,
    );
    let mut rows = trajectory_rows(&rep);
    for r in &mut rows {
        r.strategy = "adapt".into();
    }
    write_csv_file(&rows, report)?;
    Ok(res.trajectory)
}

/// `eval`: test TER of a checkpoint (no adaptation) on the given targets.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    seed: u64,
    checkpoint: &Path,
    targets: Option<&[u32]>,
    report: &Path,
) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    let ck = Checkpoint::load(checkpoint)?;
    check_spec(cfg, &ck)?;
    let corpus = generate_corpus(&cfg.data, seed)?;
    let ids: Vec<u32> = match targets {
        Some(t) => t.to_vec(),
        None => corpus.dysarthric.iter().map(|t| t.id).collect(),
    };
    let mut rows = Vec::new();
    for id in ids {
        let task = corpus.dysarthric_task(id)?;
        let counts = evaluate(&ck.spec, &ck.params, &ck.bn, &task.test_samples())?;
        let loss = crate::nn::loss_only(
            &ck.spec,
            &ck.params,
            &ck.bn,
            &task.test_samples(),
            crate::nn::Mode::Eval,
            crate::nn::LossKind::Ctc,
        )?;
        rows.push(ReportRow {
            target_id: id.to_string(),
            strategy: "eval".into(),
            ratio: 1.0,
            epoch: 0,
            seed: seed.to_string(),
            ter: counts.rate()?,
            loss,
        });
    }
    write_csv_file(&rows, report)?;
    Ok(rows)
}

/// `matrix`: writes `matrix.csv` and `matrix_summary.json` into `dir`.
pub fn cmd_matrix(cfg: &ExperimentConfig, dir: &Path) -> Result<EvalReport> {
    std::fs::create_dir_all(dir)?;
    let report = run_matrix(cfg)?;
    write_csv_file(&matrix_rows(&report), dir.join("matrix.csv"))?;
    write_summary(
        &summarize(&report, cfg.adapt.data_ratio),
        dir.join("matrix_summary.json"),
    )?;
    Ok(report)
}

/// `sweep`: writes `sweep.csv` and `sweep_summary.json` into `dir`.
pub fn cmd_sweep(cfg: &ExperimentConfig, ratios: &[f64], dir: &Path) -> Result<Vec<ReportRow>> {
    std::fs::create_dir_all(dir)?;
    let (report, rows) = sweep_ratio(cfg, ratios)?;
    write_csv_file(&rows, dir.join("sweep.csv"))?;
    let summaries: Vec<Summary> = ratios.iter().map(|&r| summarize(&report, r)).collect();
    let mut text = serde_json::to_string_pretty(&summaries)?;
    text.push('\n');
    std::fs::write(dir.join("sweep_summary.json"), text)?;
    Ok(rows)
}

/// `curves`: writes `curves.csv` and `curves_summary.json` into `dir`.
pub fn cmd_curves(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<ReportRow>> {
    std::fs::create_dir_all(dir)?;
    let (report, rows) = learning_curves(cfg)?;
    write_csv_file(&rows, dir.join("curves.csv"))?;
    write_summary(
        &summarize(&report, cfg.adapt.data_ratio),
        dir.join("curves_summary.json"),
    )?;
    Ok(rows)
}
