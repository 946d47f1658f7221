//! `dualstream`: train and evaluate the dual-stream synthetic speech detector.
//!
//! Exit status is 0 on success, 1 for usage or configuration errors and 2
//! when a command fails while running.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dualstream::eval::Protocol;
use dualstream::synthetic::SyntheticConfig;
use dualstream::Exec;

use config::{CodecChoice, RunConfig};

#[derive(Parser)]
#[command(name = "dualstream", version, about = "Dual-stream synthetic speech detector")]
struct Cli {
    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `out_dir` of the configuration.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_protocol)]
    protocol: Option<Protocol>,
    /// Overrides `data.manifest`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    codec: Option<CodecChoice>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a toy corpus of noise-burst "real" clips and harmonic "fake" clips.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 200)]
        n_real: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Split the manifest and cache evaluation spectrograms.
    Preprocess {
        #[command(flatten)]
        common: Common,
    },
    /// Train a detector; writes checkpoints, a JSONL log and a config snapshot.
    Train {
        #[command(flatten)]
        common: Common,
        /// Switch off one loss term or augmentation (repeatable).
        #[arg(long = "ablate", value_name = "SWITCH")]
        ablate: Vec<String>,
        /// Continue from last.ckpt in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Score a test set and write a score dump and report.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Row label in the report table.
        #[arg(long, default_value = "dualstream")]
        name: String,
        /// Read spectrograms written by `preprocess` instead of decoding audio.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Merge score dumps into one comparison table, optionally with plots.
    Report {
        #[arg(required = true)]
        dumps: Vec<PathBuf>,
        /// Row labels, one per dump; file stems by default.
        #[arg(long = "name")]
        names: Vec<String>,
        #[arg(long, value_parser = parse_protocol, default_value = "inner")]
        protocol: Protocol,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Write roc.svg.
        #[arg(long)]
        plots: bool,
        /// Training log to plot as loss.svg.
        #[arg(long)]
        loss_log: Option<PathBuf>,
    },
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    s.parse().map_err(|e: dualstream::Error| e.to_string())
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn resolve(common: &Common, ablate: &[String]) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).map_err(Failure::Usage)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    if let Some(dir) = &common.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(p) = common.protocol {
        cfg.data.protocol = p;
    }
    if let Some(m) = &common.manifest {
        cfg.data.manifest = Some(m.clone());
    }
    if let Some(c) = common.codec {
        cfg.codec = c;
    }
    for name in ablate {
        cfg.apply_ablation(name).map_err(Failure::Usage)?;
    }
    cfg.validate().map_err(Failure::Usage)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    let runtime = |r: anyhow::Result<()>| r.map_err(Failure::Runtime);
    match cli.command {
        Command::Synth { out_dir, n_real, seed } => {
            let cfg = SyntheticConfig {
                n_real,
                seed,
                ..Default::default()
            };
            runtime(commands::synth(&cfg, &out_dir).map(drop))
        }
        Command::Preprocess { common } => {
            let cfg = resolve(&common, &[])?;
            runtime(commands::preprocess(&cfg, exec).map(drop))
        }
        Command::Train { common, ablate, resume } => {
            let cfg = resolve(&common, &ablate)?;
            runtime(commands::train(&cfg, resume, exec))
        }
        Command::Eval {
            common,
            checkpoint,
            name,
            cache_dir,
        } => {
            let cfg = resolve(&common, &[])?;
            let req = commands::EvalRequest {
                checkpoint: &checkpoint,
                manifest: common.manifest.as_deref(),
                config: &cfg,
                protocol: cfg.data.protocol,
                name,
                cache_dir: cache_dir.as_deref(),
            };
            runtime(commands::eval(&req, exec).map(drop))
        }
        Command::Report {
            dumps,
            names,
            protocol,
            out_dir,
            plots,
            loss_log,
        } => {
            let req = commands::ReportRequest {
                dumps: &dumps,
                names: &names,
                protocol,
                out_dir: &out_dir,
                plots,
                loss_log: loss_log.as_deref(),
            };
            runtime(commands::report(&req).map(|table| print!("{table}")))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
