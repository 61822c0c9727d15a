use std::path::PathBuf;
use std::process::ExitCode;

use bitrip::config::TrainConfig;
use bitrip::harness::{self, Split, RECALL_KS};
use bitrip::{checkpoint, Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bitrip", version, about = "Bayesian triplet sampling for metric learning")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key = value config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Start from the synthetic blob defaults instead of MNIST.
    #[arg(long)]
    blobs: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = if self.blobs { TrainConfig::blobs() } else { TrainConfig::default() };
        if let Some(p) = &self.config {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            cfg.apply_text(&text)?;
        }
        cfg.apply_env();
        for kv in &self.set {
            cfg.apply_override(kv)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.data_dir {
            cfg.data_dir = d.clone();
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_ks(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split(',').map(|k| k.trim().parse::<usize>().map_err(|e| format!("{k:?}: {e}"))).collect()
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model; writes metrics.csv, summary.json and model.btrp.
    Train(ConfigArgs),
    /// Recall@k of a checkpoint on a data split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, value_parser = parse_ks)]
        ks: Option<Vec<usize>>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Nearest neighbours of one item of a split.
    Retrieve {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        query: usize,
        #[arg(long, short, default_value_t = 10)]
        k: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write a synthetic blob dataset as IDX files.
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train(args) => {
            let cfg = args.resolve()?;
            let res = harness::train(&cfg)?;
            let s = &res.summary;
            println!(
                "epochs {} (best {}), val R@1 {:.4} (baseline {:.4}), test R@1 {:.4} (baseline {:.4})",
                s.epochs_run,
                s.best_epoch,
                s.best_val.r1.unwrap_or(f64::NAN),
                s.baseline_val.r1.unwrap_or(f64::NAN),
                s.test.r1.unwrap_or(f64::NAN),
                s.baseline_test.r1.unwrap_or(f64::NAN),
            );
            println!("wrote {}", cfg.out_dir.display());
        }
        Cmd::Eval { checkpoint, split, ks, cfg } => {
            let cfg = cfg.resolve()?;
            let split: Split = split.parse()?;
            let ks = ks.unwrap_or_else(|| RECALL_KS.to_vec());
            println!("k,recall");
            for (k, r) in harness::evaluate_file(&checkpoint, &cfg, split, &ks)? {
                println!("{k},{r}");
            }
        }
        Cmd::Retrieve { checkpoint, split, query, k, cfg } => {
            let cfg = cfg.resolve()?;
            let split: Split = split.parse()?;
            let ck = checkpoint::load(&checkpoint)?;
            let data = harness::load_splits(&cfg)?;
            let qlabel = data.get(split).labels.get(query).copied();
            let hits = harness::retrieve(&ck, &data, split, query, k)?;
            println!("# query {query} label {}", qlabel.unwrap_or_default());
            println!("rank,index,label,distance");
            for (rank, h) in hits.iter().enumerate() {
                println!("{},{},{},{}", rank + 1, h.index, h.label, h.distance);
            }
        }
        Cmd::Synth { out, cfg } => {
            let cfg = cfg.resolve()?;
            harness::synth(&cfg, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
