use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use meta_reinit::harness::{self, ExperimentConfig};
use meta_reinit::meta::Algorithm;
use meta_reinit::speakers::{export_jsonl, generate_corpus};

#[derive(Parser)]
#[command(
    name = "meta-reinit",
    version,
    about = "Meta-learning re-initialization for per-speaker CTC adaptation"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Flags that override fields of the JSON config.
#[derive(Args, Default)]
struct Overrides {
    /// Experiment config (JSON); defaults are used for missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Comma-separated seed list.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Meta algorithm used by `reinit`.
    #[arg(long, global = true)]
    algorithm: Option<Algorithm>,
    /// Outer (meta) steps K.
    #[arg(long, global = true)]
    outer_steps: Option<usize>,
    /// Inner steps J per task.
    #[arg(long, global = true)]
    inner_steps: Option<usize>,
    /// Inner-loop learning rate.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Meta learning rate.
    #[arg(long, global = true)]
    eta: Option<f64>,
    #[arg(long, global = true)]
    reset_task_bn: bool,
    #[arg(long, global = true)]
    pretrain_epochs: Option<usize>,
    #[arg(long, global = true)]
    adapt_epochs: Option<usize>,
    #[arg(long, global = true)]
    adapt_lr: Option<f64>,
    /// Fraction of adaptation data used for fine-tuning.
    #[arg(long, global = true)]
    ratio: Option<f64>,
    /// Keep BN statistics fixed during adaptation.
    #[arg(long, global = true)]
    freeze_bn: bool,
    /// Comma-separated target speaker ids.
    #[arg(long, global = true, value_delimiter = ',')]
    targets: Option<Vec<u32>>,
    /// Output directory for multi-file reports.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the base model on normal speakers and write its checkpoint.
    Pretrain {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-initialize a base checkpoint for one held-out target.
    Reinit {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        target: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune a checkpoint on one target speaker.
    Adapt {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        target: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Test TER of a checkpoint without adaptation.
    Eval {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Every target × strategy at the configured ratio.
    Matrix,
    /// TER versus data ratio.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,1.0")]
        ratios: Vec<f64>,
    },
    /// TER versus adaptation epoch.
    Curves,
    /// Write the generated corpus for one seed as JSONL.
    ExportData {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Overrides {
    fn apply(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(a) = self.algorithm {
            cfg.meta.algorithm = a;
        }
        if let Some(k) = self.outer_steps {
            cfg.meta.outer_steps = k;
        }
        if let Some(j) = self.inner_steps {
            cfg.meta.inner_steps = j;
        }
        if let Some(a) = self.alpha {
            cfg.meta.alpha = a;
        }
        if let Some(e) = self.eta {
            cfg.meta.eta = e;
        }
        cfg.meta.reset_task_bn |= self.reset_task_bn;
        if let Some(e) = self.pretrain_epochs {
            cfg.pretrain.epochs = e;
        }
        if let Some(e) = self.adapt_epochs {
            cfg.adapt.epochs = e;
        }
        if let Some(lr) = self.adapt_lr {
            cfg.adapt.lr = lr;
        }
        if let Some(r) = self.ratio {
            cfg.adapt.data_ratio = r;
        }
        cfg.adapt.freeze_bn |= self.freeze_bn;
        if let Some(t) = &self.targets {
            cfg.eval.targets = Some(t.clone());
        }
        if let Some(d) = &self.out_dir {
            cfg.output.dir = d.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn pick_seed(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<u64> {
    match seed.or_else(|| cfg.seeds.first().copied()) {
        Some(s) => Ok(s),
        None => bail!("no seed given"),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.overrides.apply()?;
    let dir = cfg.output.dir.clone();
    match cli.command {
        Command::Pretrain { seed, out } => {
            let seed = pick_seed(&cfg, seed)?;
            let report = harness::cmd_pretrain(&cfg, seed, &out)?;
            print_json(&report)?;
        }
        Command::Reinit {
            seed,
            base,
            target,
            out,
        } => {
            let seed = pick_seed(&cfg, seed)?;
            harness::cmd_reinit(&cfg, seed, &base, target, cfg.meta.algorithm, &out)?;
            eprintln!("wrote {}", out.display());
        }
        Command::Adapt {
            seed,
            checkpoint,
            target,
            out,
            report,
        } => {
            let seed = pick_seed(&cfg, seed)?;
            let traj = harness::cmd_adapt(&cfg, seed, &checkpoint, target, &out, &report)?;
            print_json(&traj)?;
        }
        Command::Eval {
            seed,
            checkpoint,
            report,
        } => {
            let seed = pick_seed(&cfg, seed)?;
            let rows = harness::cmd_eval(&cfg, seed, &checkpoint, cfg.eval.targets.as_deref(), &report)?;
            print_json(&rows)?;
        }
        Command::Matrix => {
            let report = harness::cmd_matrix(&cfg, &dir)?;
            print_json(&harness::summarize(&report, cfg.adapt.data_ratio))?;
        }
        Command::Sweep { ratios } => {
            harness::cmd_sweep(&cfg, &ratios, &dir)?;
            eprintln!("wrote {}", dir.join("sweep.csv").display());
        }
        Command::Curves => {
            harness::cmd_curves(&cfg, &dir)?;
            eprintln!("wrote {}", dir.join("curves.csv").display());
        }
        Command::ExportData { seed, out } => {
            let seed = pick_seed(&cfg, seed)?;
            let corpus = generate_corpus(&cfg.data, seed)?;
            let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut w = std::io::BufWriter::new(file);
            export_jsonl(&corpus.normal, &mut w)?;
            export_jsonl(&corpus.dysarthric, &mut w)?;
            std::io::Write::flush(&mut w)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
