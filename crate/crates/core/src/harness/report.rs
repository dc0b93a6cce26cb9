//! CSV and JSON report writers.
//!
//! Every CSV uses the header `target_id,strategy,ratio,epoch,seed,ter,loss`.
//! Aggregated rows use `all` for `target_id`; median rows use `median` for
//! `seed`. `loss` is the CTC loss on the adaptation subset (eval-mode BN).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{median, overall_ter, Cell, EvalReport, Strategy};
use super::train::EpochPoint;
use crate::error::Result;
use crate::speakers::SeverityBand;

pub const CSV_HEADER: [&str; 7] = ["target_id", "strategy", "ratio", "epoch", "seed", "ter", "loss"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub target_id: String,
    pub strategy: String,
    pub ratio: f64,
    pub epoch: usize,
    pub seed: String,
    pub ter: f64,
    pub loss: f64,
}

fn cell_row(c: &Cell, p: &EpochPoint) -> ReportRow {
    ReportRow {
        target_id: c.target_id.to_string(),
        strategy: c.strategy.name().to_string(),
        ratio: c.ratio,
        epoch: p.epoch,
        seed: c.seed.to_string(),
        ter: p.ter,
        loss: p.loss,
    }
}

/// One row per cell at its final epoch.
pub fn matrix_rows(report: &EvalReport) -> Vec<ReportRow> {
    report.cells.iter().map(|c| cell_row(c, c.final_point())).collect()
}

/// One row per epoch of every cell.
pub fn trajectory_rows(report: &EvalReport) -> Vec<ReportRow> {
    report
        .cells
        .iter()
        .flat_map(|c| c.trajectory.iter().map(move |p| cell_row(c, p)))
        .collect()
}

fn strategies_in(report: &EvalReport) -> Vec<Strategy> {
    let mut s: Vec<Strategy> = report.cells.iter().map(|c| c.strategy).collect();
    s.sort();
    s.dedup();
    s
}

fn mean_loss(report: &EvalReport, strategy: Strategy, ratio: f64, epoch: Option<usize>, seed: u64) -> f64 {
    let losses: Vec<f64> = report
        .cells
        .iter()
        .filter(|c| c.strategy == strategy && c.ratio == ratio && c.seed == seed)
        .map(|c| match epoch {
            Some(e) => c.trajectory.get(e).unwrap_or_else(|| c.final_point()).loss,
            None => c.final_point().loss,
        })
        .collect();
    losses.iter().sum::<f64>() / losses.len().max(1) as f64
}

fn aggregate_rows(
    report: &EvalReport,
    strategy: Strategy,
    ratio: f64,
    epoch: Option<usize>,
    shown_epoch: usize,
) -> Vec<ReportRow> {
    let per_seed = overall_ter(report, strategy, ratio, epoch, None);
    let mut rows = Vec::with_capacity(per_seed.len() + 1);
    let mut losses = Vec::new();
    for (&seed, &ter) in &per_seed {
        let loss = mean_loss(report, strategy, ratio, epoch, seed);
        losses.push(loss);
        rows.push(ReportRow {
            target_id: "all".into(),
            strategy: strategy.name().into(),
            ratio,
            epoch: shown_epoch,
            seed: seed.to_string(),
            ter,
            loss,
        });
    }
    if let (Some(ter), Some(loss)) = (median(per_seed.values().copied()), median(losses)) {
        rows.push(ReportRow {
            target_id: "all".into(),
            strategy: strategy.name().into(),
            ratio,
            epoch: shown_epoch,
            seed: "median".into(),
            ter,
            loss,
        });
    }
    rows
}

/// TER per (strategy, ratio) at the final epoch: per-seed pooled rows plus a median row.
pub fn sweep_rows(report: &EvalReport, ratios: &[f64], epochs: usize) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for s in strategies_in(report) {
        let shown = if s.adapts() { epochs } else { 0 };
        for &r in ratios {
            rows.extend(aggregate_rows(report, s, r, None, shown));
        }
    }
    rows
}

/// TER per (strategy, epoch) for one ratio; `base` is flat at its epoch-0 value.
pub fn curve_rows(report: &EvalReport, ratio: f64, epochs: usize) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for s in strategies_in(report) {
        for e in 0..=epochs {
            rows.extend(aggregate_rows(report, s, ratio, Some(e), e));
        }
    }
    rows
}

pub fn write_csv(rows: &[ReportRow], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(rows: &[ReportRow], path: impl AsRef<Path>) -> Result<()> {
    write_csv(rows, std::fs::File::create(path)?)
}

/// Reads a report CSV, checking the header.
pub fn read_csv(input: impl std::io::Read) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(crate::error::Error::Config(format!("unexpected CSV header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub overall_ter_per_seed: BTreeMap<u64, f64>,
    pub median_overall_ter: Option<f64>,
    pub median_ter_per_band: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seeds: Vec<u64>,
    pub ratio: f64,
    pub strategies: BTreeMap<String, StrategySummary>,
    pub pretrain_final_loss: BTreeMap<u64, f64>,
}

pub fn summarize(report: &EvalReport, ratio: f64) -> Summary {
    let mut strategies = BTreeMap::new();
    for s in strategies_in(report) {
        let per_seed = overall_ter(report, s, ratio, None, None);
        let mut per_band = BTreeMap::new();
        for band in SeverityBand::DYSARTHRIC {
            if let Some(m) = median(overall_ter(report, s, ratio, None, Some(band)).into_values()) {
                per_band.insert(band.name().to_string(), m);
            }
        }
        strategies.insert(
            s.name().to_string(),
            StrategySummary {
                median_overall_ter: median(per_seed.values().copied()),
                overall_ter_per_seed: per_seed,
                median_ter_per_band: per_band,
            },
        );
    }
    let mut seeds: Vec<u64> = report.cells.iter().map(|c| c.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    Summary {
        seeds,
        ratio,
        strategies,
        pretrain_final_loss: report.pretrain.iter().map(|(s, p)| (*s, p.final_loss)).collect(),
    }
}

pub fn write_summary(summary: &Summary, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
