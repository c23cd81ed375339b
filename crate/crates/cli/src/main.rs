//! `iblab`: data generation, reward-model training, detection, RL runs,
//! sweeps and replay for the synthetic preference world.
//!
//! Exit codes: 0 success, 2 config or input error, 3 numeric divergence,
//! 4 replay output differs from its manifest.

mod config;
mod error;
mod files;
mod jobs;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use iblab::rewardmodels::RmKind;

use crate::config::{peek_u64, read_table, render, resolve};
use crate::error::{CliError, CliResult};
use crate::files::LatentFormat;
use crate::jobs::{
    data_seed, DetectJob, EvalRmJob, EvalSplit, GenDataJob, Job, PessimismJob, RlRunJob, RlRunSettings, SweepJob,
    SweepParam, TrainRmJob, TrainRmSettings, DEFAULT_SWEEP_SEEDS,
};

/// Relative paths resolve under this directory when it is set.
const OUT_ENV: &str = "IBLAB_OUT";

#[derive(Parser)]
#[command(name = "iblab", version, about = "Information-bottleneck reward modelling on a synthetic preference world")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Standard,
    Inform,
}

impl From<KindArg> for RmKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Standard => RmKind::Standard,
            KindArg::Inform => RmKind::Inform,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ConfigKind {
    GenData,
    TrainRm,
    RlRun,
    Sweep,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate response pools, preference pairs and SFT samples.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a standard or InfoRM reward model on a dataset's training pairs.
    TrainRm {
        /// Output directory of gen-data.
        #[arg(long)]
        data: PathBuf,
        /// Overrides the config's `kind`.
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise accuracy of a checkpoint on the in- or out-of-distribution pairs.
    EvalRm {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "id")]
        split: EvalSplit,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mahalanobis outlier detection of RLHF samples against SFT samples.
    Detect {
        /// InfoRM checkpoint directory.
        #[arg(long)]
        detector: PathBuf,
        /// SFT latents (.iblat, .csv) or responses (.jsonl).
        #[arg(long)]
        sft: PathBuf,
        /// RLHF latents or responses.
        #[arg(long)]
        rlhf: PathBuf,
        #[arg(long, default_value_t = iblab::detector::DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = iblab::numkit::DEFAULT_SHRINKAGE)]
        shrinkage: f64,
        #[arg(long, default_value_t = iblab::detector::DEFAULT_FILTER_QUANTILE)]
        filter_quantile: f64,
        #[arg(long, value_enum, default_value = "iblat")]
        latent_format: LatentFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Policy optimisation against a proxy reward model.
    RlRun {
        #[arg(long)]
        rm: PathBuf,
        /// InfoRM checkpoint used for detection and the IBL penalty.
        #[arg(long)]
        detector: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form vs numeric pessimistic reward and the covariance comparison.
    PessimismCheck {
        #[arg(long, default_value_t = 16)]
        max_dim: usize,
        #[arg(long, default_value_t = iblab::pessimism::DEFAULT_B)]
        b: f64,
        /// Number of random instances.
        #[arg(long, default_value_t = 50)]
        seeds: u64,
        #[arg(long, default_value_t = 4)]
        sigma_dim: usize,
        #[arg(long, default_value_t = 100_000)]
        sigma_pairs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline per grid point and seed; summary is seed-averaged.
    Sweep {
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Base experiment config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rerun a command from its manifest and compare output hashes.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a command's default config as TOML.
    PrintConfig {
        #[arg(value_enum)]
        command: ConfigKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "beta")]
        param: SweepParam,
    },
}

fn root() -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => std::env::current_dir().unwrap_or_default(),
    }
}

fn at_root(p: &Path) -> PathBuf {
    let p = if p.is_absolute() { p.to_path_buf() } else { root().join(p) };
    std::fs::canonicalize(&p).unwrap_or(p)
}

fn out_dir(out: Option<PathBuf>, command: &str) -> PathBuf {
    at_root(&out.unwrap_or_else(|| PathBuf::from(command)))
}

fn table(config: Option<PathBuf>) -> CliResult<toml::Table> {
    match config {
        Some(p) => read_table(&at_root(&p)),
        None => Ok(toml::Table::new()),
    }
}

fn run(cmd: Cmd) -> CliResult<()> {
    let (job, out) = match cmd {
        Cmd::GenData { config, out } => {
            let t = table(config)?;
            let seed = peek_u64(&t, "seed")?.unwrap_or(0);
            (Job::GenData(resolve(&GenDataJob::defaults(seed), t)?), out_dir(out, "gen-data"))
        }
        Cmd::TrainRm { data, kind, config, out } => {
            let data = at_root(&data);
            let mut settings = resolve(&TrainRmSettings::defaults(data_seed(&data)?), table(config)?)?;
            if let Some(k) = kind {
                settings.kind = k.into();
            }
            (Job::TrainRm(TrainRmJob { data, settings }), out_dir(out, "train-rm"))
        }
        Cmd::EvalRm { checkpoint, data, split, out } => (
            Job::EvalRm(EvalRmJob { checkpoint: at_root(&checkpoint), data: at_root(&data), split }),
            out_dir(out, "eval-rm"),
        ),
        Cmd::Detect { detector, sft, rlhf, alpha, shrinkage, filter_quantile, latent_format, out } => {
            let job = DetectJob {
                alpha,
                shrinkage,
                filter_quantile,
                latent_format,
                ..DetectJob::defaults(at_root(&detector), at_root(&sft), at_root(&rlhf))
            };
            (Job::Detect(job), out_dir(out, "detect"))
        }
        Cmd::RlRun { rm, detector, data, config, out } => {
            let data = at_root(&data);
            let settings = resolve(&RlRunSettings::defaults(data_seed(&data)?), table(config)?)?;
            let job = RlRunJob { rm: at_root(&rm), detector: at_root(&detector), data, settings };
            (Job::RlRun(job), out_dir(out, "rl-run"))
        }
        Cmd::PessimismCheck { max_dim, b, seeds, sigma_dim, sigma_pairs, out } => (
            Job::PessimismCheck(PessimismJob { max_dim, b, n_seeds: seeds, sigma_dim, sigma_pairs }),
            out_dir(out, "pessimism-check"),
        ),
        Cmd::Sweep { param, grid, seeds, config, out } => {
            let base = resolve(&SweepJob::default_base(param), table(config)?)?;
            let seeds = seeds.unwrap_or_else(|| DEFAULT_SWEEP_SEEDS.to_vec());
            (Job::Sweep(SweepJob { param, grid, seeds, base }), out_dir(out, "sweep"))
        }
        Cmd::Replay { manifest, out } => {
            let report = manifest::replay(&at_root(&manifest), out.map(|o| at_root(&o)))?;
            println!("replay identical: {} files", report.files.len());
            return Ok(());
        }
        Cmd::PrintConfig { command, seed, param } => {
            let text = match command {
                ConfigKind::GenData => render(&GenDataJob::defaults(seed))?,
                ConfigKind::TrainRm => render(&TrainRmSettings::defaults(seed))?,
                ConfigKind::RlRun => render(&RlRunSettings::defaults(seed))?,
                ConfigKind::Sweep => render(&SweepJob::default_base(param))?,
            };
            print!("{text}");
            return Ok(());
        }
    };
    let m = manifest::record(&job, &out)?;
    println!("{}: wrote {} files to {}", m.command, m.outputs.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { code, source }) => {
            eprintln!("error: {source:#}");
            ExitCode::from(code)
        }
    }
}
